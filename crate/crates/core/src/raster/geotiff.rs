//! GeoTIFF reading and writing.
//!
//! Georeferencing is stored as `ModelPixelScale` + `ModelTiepoint` with the
//! EPSG code in the GeoKey directory; nodata goes in the GDAL nodata tag and
//! band names (plus optional acquisition dates) in GDAL metadata XML. Files
//! written elsewhere may instead carry band names in a `{path}.bands.json`
//! sidecar, which the reader honours.

use std::fs::File;
use std::io::{BufReader, BufWriter, Seek};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use tiff::decoder::{Decoder, DecodingResult, Limits};
use tiff::encoder::{DirectoryEncoder, TiffEncoder, TiffKindStandard};
use tiff::tags::{PlanarConfiguration, Tag};
use tiff::{TiffError, TiffFormatError};

use super::{default_band_names, Band, GridGeometry, NdviStack, Raster, RasterError, Result};
use crate::mask::{ClassMask, MASK_NODATA};

const GDAL_METADATA: u16 = 42112;
const MODEL_TRANSFORMATION: u16 = 34264;

const GT_MODEL_TYPE: u16 = 1024;
const GT_RASTER_TYPE: u16 = 1025;
const GEOGRAPHIC_TYPE: u16 = 2048;
const PROJECTED_CS_TYPE: u16 = 3072;
const MODEL_PROJECTED: u16 = 1;
const MODEL_GEOGRAPHIC: u16 = 2;
const RASTER_PIXEL_IS_AREA: u16 = 1;

/// Target strip size in bytes.
const STRIP_BYTES: usize = 1 << 16;

#[derive(Debug, Default, Clone, PartialEq)]
struct BandMetadata {
    names: Vec<String>,
    dates: Vec<NaiveDate>,
}

pub fn write_raster(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let meta = BandMetadata { names: raster.band_names().to_vec(), dates: Vec::new() };
    write_f32(raster, &meta, path.as_ref())
}

/// Writes the stack with its band dates recorded in the band metadata.
pub fn write_ndvi_stack(stack: &NdviStack, path: impl AsRef<Path>) -> Result<()> {
    let raster = stack.raster();
    let meta = BandMetadata { names: raster.band_names().to_vec(), dates: stack.dates().to_vec() };
    write_f32(raster, &meta, path.as_ref())
}

pub fn write_class_mask(mask: &ClassMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let meta = BandMetadata { names: vec!["class".into()], dates: Vec::new() };
    let layout = Layout { bits: 8, sample_format: 1, samples: 1 };
    let nodata = MASK_NODATA.to_string();
    write_with(path, mask.geometry(), layout, &nodata, &meta, |dir, rows| {
        let w = mask.width();
        dir.write_data(&mask.codes()[rows.start * w..rows.end * w])
    })
}

fn write_f32(raster: &Raster, meta: &BandMetadata, path: &Path) -> Result<()> {
    let n = raster.band_count();
    let layout = Layout { bits: 32, sample_format: 3, samples: n as u16 };
    let nodata = format_nodata(raster.nodata());
    let g = raster.geometry();
    write_with(path, g, layout, &nodata, meta, |dir, rows| {
        let mut buf = Vec::with_capacity(rows.len() * g.width * n);
        for row in rows {
            for col in 0..g.width {
                buf.extend(raster.bands().iter().map(|b| b.get(col, row)));
            }
        }
        dir.write_data(buf.as_slice())
    })
}

#[derive(Clone, Copy)]
struct Layout {
    bits: u16,
    sample_format: u16,
    samples: u16,
}

type Dir<'a> = DirectoryEncoder<'a, BufWriter<File>, TiffKindStandard>;

fn write_with<F>(
    path: &Path,
    g: &GridGeometry,
    layout: Layout,
    nodata: &str,
    meta: &BandMetadata,
    mut write_rows: F,
) -> Result<()>
where
    F: FnMut(&mut Dir<'_>, std::ops::Range<usize>) -> tiff::TiffResult<u64>,
{
    let io_err = |source| RasterError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut encoder = TiffEncoder::new(BufWriter::new(file)).map_err(|e| tiff_err(path, e))?;
    let result = (|| -> tiff::TiffResult<()> {
        let mut dir = encoder.image_directory()?;
        let samples = layout.samples as usize;
        dir.write_tag(Tag::ImageWidth, g.width as u32)?;
        dir.write_tag(Tag::ImageLength, g.height as u32)?;
        dir.write_tag(Tag::BitsPerSample, vec![layout.bits; samples].as_slice())?;
        dir.write_tag(Tag::Compression, 1u16)?;
        dir.write_tag(Tag::PhotometricInterpretation, 1u16)?;
        dir.write_tag(Tag::SamplesPerPixel, layout.samples)?;
        dir.write_tag(Tag::SampleFormat, vec![layout.sample_format; samples].as_slice())?;
        dir.write_tag(Tag::PlanarConfiguration, 1u16)?;
        if samples > 1 {
            dir.write_tag(Tag::ExtraSamples, vec![0u16; samples - 1].as_slice())?;
        }
        let row_bytes = g.width * samples * layout.bits as usize / 8;
        let rows_per_strip = (STRIP_BYTES / row_bytes.max(1)).clamp(1, g.height);
        dir.write_tag(Tag::RowsPerStrip, rows_per_strip as u32)?;

        dir.write_tag(Tag::ModelPixelScaleTag, [g.pixel_size, g.pixel_size, 0.0].as_slice())?;
        dir.write_tag(
            Tag::ModelTiepointTag,
            [0.0, 0.0, 0.0, g.origin_x, g.origin_y, 0.0].as_slice(),
        )?;
        dir.write_tag(Tag::GeoKeyDirectoryTag, geokeys(g.crs_code)?.as_slice())?;
        dir.write_tag(Tag::GdalNodata, nodata)?;
        dir.write_tag(Tag::Unknown(GDAL_METADATA), gdal_metadata_xml(meta).as_str())?;

        let mut offsets = Vec::new();
        let mut counts = Vec::new();
        let mut row = 0;
        while row < g.height {
            let end = (row + rows_per_strip).min(g.height);
            let offset = write_rows(&mut dir, row..end)?;
            offsets.push(u32::try_from(offset).map_err(|_| TiffError::LimitsExceeded)?);
            counts.push(((end - row) * row_bytes) as u32);
            row = end;
        }
        dir.write_tag(Tag::StripOffsets, offsets.as_slice())?;
        dir.write_tag(Tag::StripByteCounts, counts.as_slice())?;
        dir.finish()
    })();
    result.map_err(|e| tiff_err(path, e))?;
    // TiffEncoder flushes on drop; make write failures visible.
    drop(encoder);
    Ok(())
}

fn geokeys(crs: u32) -> tiff::TiffResult<Vec<u16>> {
    let code = u16::try_from(crs).map_err(|_| TiffError::LimitsExceeded)?;
    let geographic = (4000..5000).contains(&crs);
    let (model, key) = if geographic {
        (MODEL_GEOGRAPHIC, GEOGRAPHIC_TYPE)
    } else {
        (MODEL_PROJECTED, PROJECTED_CS_TYPE)
    };
    Ok(vec![
        1, 1, 0, 3,
        GT_MODEL_TYPE, 0, 1, model,
        GT_RASTER_TYPE, 0, 1, RASTER_PIXEL_IS_AREA,
        key, 0, 1, code,
    ])
}

fn format_nodata(v: f32) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

fn gdal_metadata_xml(meta: &BandMetadata) -> String {
    let mut s = String::from("<GDALMetadata>\n");
    for (i, name) in meta.names.iter().enumerate() {
        s.push_str(&format!(
            "  <Item name=\"DESCRIPTION\" sample=\"{i}\" role=\"description\">{}</Item>\n",
            xml_escape(name)
        ));
    }
    for (i, d) in meta.dates.iter().enumerate() {
        s.push_str(&format!("  <Item name=\"DATE\" sample=\"{i}\">{d}</Item>\n"));
    }
    s.push_str("</GDALMetadata>");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn xml_unescape(s: &str) -> String {
    s.replace("&lt;", "<").replace("&gt;", ">").replace("&quot;", "\"").replace("&amp;", "&")
}

fn xml_attr<'a>(tag: &'a str, name: &str) -> Option<&'a str> {
    let key = format!("{name}=\"");
    let start = tag.find(&key)? + key.len();
    let end = tag[start..].find('"')? + start;
    Some(&tag[start..end])
}

/// Parses `<Item name=".." sample="i">value</Item>` entries. Unknown items
/// are ignored.
fn parse_gdal_metadata(xml: &str, bands: usize) -> BandMetadata {
    let mut names: Vec<Option<String>> = vec![None; bands];
    let mut dates: Vec<Option<NaiveDate>> = vec![None; bands];
    let mut rest = xml;
    while let Some(start) = rest.find("<Item") {
        rest = &rest[start..];
        let Some(open_end) = rest.find('>') else { break };
        let open = &rest[..open_end];
        let Some(close) = rest.find("</Item>") else { break };
        let value = xml_unescape(rest[open_end + 1..close].trim());
        rest = &rest[close + "</Item>".len()..];
        let sample = xml_attr(open, "sample").and_then(|s| s.parse::<usize>().ok());
        let Some(sample) = sample.filter(|&s| s < bands) else { continue };
        match xml_attr(open, "name") {
            Some("DESCRIPTION") => names[sample] = Some(value),
            Some("DATE") => dates[sample] = NaiveDate::parse_from_str(&value, "%Y-%m-%d").ok(),
            _ => {}
        }
    }
    BandMetadata {
        names: if names.iter().all(Option::is_some) { names.into_iter().flatten().collect() } else { Vec::new() },
        dates: if dates.iter().all(Option::is_some) { dates.into_iter().flatten().collect() } else { Vec::new() },
    }
}

#[derive(serde::Deserialize)]
struct Sidecar {
    names: Vec<String>,
    #[serde(default)]
    dates: Vec<NaiveDate>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".bands.json");
    PathBuf::from(s)
}

fn read_sidecar(path: &Path, bands: usize) -> Option<BandMetadata> {
    let text = std::fs::read_to_string(sidecar_path(path)).ok()?;
    let sc: Sidecar = match serde_json::from_str(&text) {
        Ok(sc) => sc,
        Err(e) => {
            log::warn!("ignoring malformed band sidecar for {}: {e}", path.display());
            return None;
        }
    };
    (sc.names.len() == bands).then(|| BandMetadata {
        names: sc.names,
        dates: if sc.dates.len() == bands { sc.dates } else { Vec::new() },
    })
}

struct Decoded {
    geometry: GridGeometry,
    samples: usize,
    /// Band-sequential samples converted to f32.
    planes: Vec<Vec<f32>>,
    nodata: Option<f32>,
    meta: BandMetadata,
    raw_u8: Option<Vec<u8>>,
}

fn tiff_err(path: &Path, e: TiffError) -> RasterError {
    match e {
        TiffError::IoError(source) => RasterError::Io { path: path.to_path_buf(), source },
        other => RasterError::Unsupported { path: path.to_path_buf(), reason: other.to_string() },
    }
}

fn decode(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            RasterError::NotFound(path.to_path_buf())
        } else {
            RasterError::Io { path: path.to_path_buf(), source }
        }
    })?;
    let te = |e| tiff_err(path, e);
    let mut dec = Decoder::new(BufReader::new(file)).map_err(te)?.with_limits(Limits::unlimited());
    let (w, h) = dec.dimensions().map_err(te)?;
    let samples = dec.colortype().map_err(te)?.num_samples() as usize;
    let planar = dec
        .find_tag_unsigned::<u16>(Tag::PlanarConfiguration)
        .map_err(te)?
        .and_then(PlanarConfiguration::from_u16)
        .unwrap_or(PlanarConfiguration::Chunky);

    let georef = |reason: &str| RasterError::Georeferencing {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let (pixel_size, origin_x, origin_y) = read_transform(&mut dec).map_err(te)?.ok_or_else(|| {
        georef("no ModelPixelScale/ModelTiepoint or ModelTransformation tag")
    })?;
    let crs = read_crs(&mut dec).map_err(te)?.ok_or_else(|| georef("no EPSG code in GeoKey directory"))?;
    let geometry = GridGeometry::new(origin_x, origin_y, pixel_size, w as usize, h as usize, crs)
        .map_err(|e| georef(&e.to_string()))?;

    let nodata = match dec.find_tag(Tag::GdalNodata).map_err(te)? {
        Some(v) => {
            let s = v.into_string().map_err(te)?;
            let s = s.trim_matches(char::from(0)).trim();
            Some(s.parse::<f32>().map_err(|_| RasterError::Unsupported {
                path: path.to_path_buf(),
                reason: format!("unparseable nodata value {s:?}"),
            })?)
        }
        None => None,
    };
    let meta_xml = match dec.find_tag(Tag::Unknown(GDAL_METADATA)).map_err(te)? {
        Some(v) => Some(v.into_string().map_err(te)?),
        None => None,
    };

    let mut result = DecodingResult::U8(Vec::new());
    let layout = dec.read_image_to_buffer(&mut result).map_err(te)?;
    let n_px = geometry.len();
    let raw_u8 = match &result {
        DecodingResult::U8(v) if samples == 1 => Some(v.clone()),
        _ => None,
    };
    let flat = to_f32(result);
    if flat.len() < n_px * samples || layout.complete_len == 0 {
        return Err(RasterError::Unsupported {
            path: path.to_path_buf(),
            reason: format!("decoded {} samples, expected {}", flat.len(), n_px * samples),
        });
    }
    let planes = match planar {
        PlanarConfiguration::Chunky => (0..samples)
            .map(|b| flat.iter().skip(b).step_by(samples).copied().take(n_px).collect())
            .collect(),
        PlanarConfiguration::Planar => flat.chunks(n_px).take(samples).map(<[f32]>::to_vec).collect(),
        _ => {
            return Err(RasterError::Unsupported {
                path: path.to_path_buf(),
                reason: "unknown planar configuration".into(),
            })
        }
    };

    let mut meta = meta_xml.map(|x| parse_gdal_metadata(&x, samples)).unwrap_or_default();
    if meta.names.is_empty() {
        if let Some(sc) = read_sidecar(path, samples) {
            meta = sc;
        }
    }
    Ok(Decoded { geometry, samples, planes, nodata, meta, raw_u8 })
}

fn read_transform<R: std::io::Read + Seek>(dec: &mut Decoder<R>) -> tiff::TiffResult<Option<(f64, f64, f64)>> {
    let scale = dec.find_tag(Tag::ModelPixelScaleTag)?.map(|v| v.into_f64_vec()).transpose()?;
    let tie = dec.find_tag(Tag::ModelTiepointTag)?.map(|v| v.into_f64_vec()).transpose()?;
    if let (Some(scale), Some(tie)) = (scale, tie) {
        if scale.len() < 2 || tie.len() < 6 {
            return Err(TiffError::FormatError(TiffFormatError::InvalidTag));
        }
        if scale[0] != scale[1] {
            return Err(TiffError::UnsupportedError(tiff::TiffUnsupportedError::UnknownInterpretation));
        }
        let ps = scale[0];
        let origin_x = tie[3] - tie[0] * ps;
        let origin_y = tie[4] + tie[1] * ps;
        return Ok(Some((ps, origin_x, origin_y)));
    }
    if let Some(m) = dec.find_tag(Tag::Unknown(MODEL_TRANSFORMATION))? {
        let m = m.into_f64_vec()?;
        if m.len() >= 8 && m[1] == 0.0 && m[4] == 0.0 && m[0] == -m[5] {
            return Ok(Some((m[0], m[3], m[7])));
        }
        return Err(TiffError::UnsupportedError(tiff::TiffUnsupportedError::UnknownInterpretation));
    }
    Ok(None)
}

fn read_crs<R: std::io::Read + Seek>(dec: &mut Decoder<R>) -> tiff::TiffResult<Option<u32>> {
    let Some(keys) = dec.find_tag(Tag::GeoKeyDirectoryTag)? else { return Ok(None) };
    let keys = keys.into_u16_vec()?;
    if keys.len() < 4 {
        return Ok(None);
    }
    let n = keys[3] as usize;
    let mut crs = None;
    for k in keys[4..].chunks_exact(4).take(n) {
        // only inline (location 0) short values carry codes
        if k[1] != 0 {
            continue;
        }
        match k[0] {
            PROJECTED_CS_TYPE if k[3] != 0 && k[3] != 32767 => crs = Some(k[3] as u32),
            GEOGRAPHIC_TYPE if crs.is_none() && k[3] != 0 && k[3] != 32767 => crs = Some(k[3] as u32),
            _ => {}
        }
    }
    Ok(crs)
}

fn to_f32(r: DecodingResult) -> Vec<f32> {
    match r {
        DecodingResult::U8(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::U64(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::I8(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::I64(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::F16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::F32(v) => v,
        DecodingResult::F64(v) => v.into_iter().map(|x| x as f32).collect(),
    }
}

/// Reads every band of a GeoTIFF as f32. Band names come from the file's
/// band descriptions, else a sidecar, else `band1..bandN`. Files without a
/// nodata tag get [`super::DEFAULT_NODATA`].
pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let d = decode(path)?;
    let names = if d.meta.names.len() == d.samples { d.meta.names } else { default_band_names(d.samples) };
    let bands = d
        .planes
        .into_iter()
        .map(|p| Band::new(d.geometry.width, d.geometry.height, p))
        .collect::<Result<Vec<_>>>()?;
    // duplicate descriptions in foreign files fall back to generic names
    let nodata = d.nodata.unwrap_or(super::DEFAULT_NODATA);
    Raster::new(d.geometry, bands.clone(), names, nodata)
        .or_else(|_| Raster::with_default_names(d.geometry, bands, nodata))
}

/// Reads a 3-band NDVI stack; band dates must be present in the metadata.
pub fn read_ndvi_stack(path: impl AsRef<Path>) -> Result<NdviStack> {
    let path = path.as_ref();
    let d = decode(path)?;
    if d.meta.dates.len() != 3 {
        return Err(RasterError::BandLayout(format!("{} carries no band dates", path.display())));
    }
    let dates = [d.meta.dates[0], d.meta.dates[1], d.meta.dates[2]];
    let raster = read_raster(path)?;
    NdviStack::from_parts(raster, dates)
}

/// Reads a single-band 8-bit class mask.
pub fn read_class_mask(path: impl AsRef<Path>) -> Result<ClassMask> {
    let path = path.as_ref();
    let d = decode(path)?;
    let codes = d.raw_u8.ok_or_else(|| RasterError::Unsupported {
        path: path.to_path_buf(),
        reason: format!("class mask must be single-band 8-bit, got {} band(s)", d.samples),
    })?;
    ClassMask::new(d.geometry, codes)
}
