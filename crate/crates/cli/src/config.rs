//! TOML pipeline configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use chrono::NaiveDate;
use fieldpipe::postprocess::{PostprocessParams, DEFAULT_BIN_EDGES_HA};
use fieldpipe::{CropRule, EdgePolicy, SplitFractions, TileSpec};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Sentinel2,
    Planetscope,
}

/// Sensor-dependent defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorProfile {
    pub pixel_size: f64,
    pub tile_size: usize,
    pub stride: usize,
    pub half_width: f64,
    pub min_area_ha: f64,
}

impl Profile {
    pub fn defaults(self) -> SensorProfile {
        match self {
            Profile::Sentinel2 => SensorProfile {
                pixel_size: 10.0,
                tile_size: 256,
                stride: 128,
                half_width: 10.0,
                min_area_ha: 0.5,
            },
            Profile::Planetscope => SensorProfile {
                pixel_size: 3.0,
                tile_size: 384,
                stride: 128,
                half_width: 3.0,
                min_area_ha: 0.05,
            },
        }
    }
}

/// Raster cut into training tiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TileSource {
    #[default]
    Ndvi,
    Bands,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    profile: Option<Profile>,
    pixel_size: Option<f64>,
    tile_size: Option<usize>,
    stride: Option<usize>,
    half_width: Option<f64>,
    min_area_ha: Option<f64>,
    #[serde(default)]
    edge_policy: EdgePolicy,
    #[serde(default = "one")]
    reflectance_scale: f64,
    #[serde(default)]
    band_stack: bool,
    #[serde(default)]
    tile_source: TileSource,
    work_dir: PathBuf,
    #[serde(default)]
    dates: Vec<RawDate>,
    parcels: RawParcels,
    #[serde(default)]
    split: RawSplit,
    #[serde(default)]
    postprocess: RawPostprocess,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDate {
    date: NaiveDate,
    scenes: Vec<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParcels {
    path: PathBuf,
    #[serde(default = "all_rule")]
    crop_rule: String,
}

fn all_rule() -> String {
    "*".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplit {
    #[serde(default = "default_fractions")]
    fractions: [f64; 3],
    #[serde(default = "default_cell_size")]
    cell_size: usize,
    #[serde(default)]
    seed: u64,
}

impl Default for RawSplit {
    fn default() -> Self {
        Self { fractions: default_fractions(), cell_size: default_cell_size(), seed: 0 }
    }
}

fn default_fractions() -> [f64; 3] {
    SplitFractions::default().as_array()
}

fn default_cell_size() -> usize {
    4
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPostprocess {
    closing_radius: Option<usize>,
    expand_px: Option<usize>,
    simplify_tolerance: Option<f64>,
    min_area_ha: Option<f64>,
    bin_edges_ha: Option<Vec<f64>>,
    #[serde(default = "yes")]
    histogram_svg: bool,
}

fn yes() -> bool {
    true
}

impl Default for RawPostprocess {
    fn default() -> Self {
        Self {
            closing_radius: None,
            expand_px: None,
            simplify_tolerance: None,
            min_area_ha: None,
            bin_edges_ha: None,
            histogram_svg: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DateGroup {
    pub date: NaiveDate,
    pub scenes: Vec<PathBuf>,
}

/// Fully resolved configuration; relative paths are anchored at the
/// directory holding the config file.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub sensor: SensorProfile,
    pub tile_spec: TileSpec,
    pub reflectance_scale: f64,
    pub band_stack: bool,
    pub tile_source: TileSource,
    pub work_dir: PathBuf,
    /// Ascending by date.
    pub dates: Vec<DateGroup>,
    pub parcels_path: PathBuf,
    pub crop_rule: CropRule,
    pub fractions: SplitFractions,
    pub cell_size: usize,
    pub seed: u64,
    pub postprocess: PostprocessParams,
    pub histogram_svg: bool,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        let defaults = raw.profile.map(Profile::defaults);
        let pick = |v: Option<f64>, d: Option<f64>, name: &str| -> Result<f64> {
            v.or(d).with_context(|| format!("{name} is not set and no profile is given"))
        };
        let pick_usize = |v: Option<usize>, d: Option<usize>, name: &str| -> Result<usize> {
            v.or(d).with_context(|| format!("{name} is not set and no profile is given"))
        };
        let sensor = SensorProfile {
            pixel_size: pick(raw.pixel_size, defaults.map(|d| d.pixel_size), "pixel_size")?,
            tile_size: pick_usize(raw.tile_size, defaults.map(|d| d.tile_size), "tile_size")?,
            stride: pick_usize(raw.stride, defaults.map(|d| d.stride), "stride")?,
            half_width: pick(raw.half_width, defaults.map(|d| d.half_width), "half_width")?,
            min_area_ha: pick(raw.min_area_ha, defaults.map(|d| d.min_area_ha), "min_area_ha")?,
        };
        ensure!(sensor.pixel_size > 0.0, "pixel_size must be positive");
        ensure!(sensor.half_width > 0.0, "half_width must be positive");
        ensure!(sensor.min_area_ha >= 0.0, "min_area_ha must be non-negative");
        let tile_spec = TileSpec::new(sensor.tile_size, sensor.stride, raw.edge_policy)?;
        ensure!(raw.reflectance_scale > 0.0, "reflectance_scale must be positive");

        let mut dates: Vec<DateGroup> = raw
            .dates
            .into_iter()
            .map(|d| DateGroup { date: d.date, scenes: d.scenes.into_iter().map(|p| base.join(p)).collect() })
            .collect();
        dates.sort_by_key(|d| d.date);
        if dates.len() != 3 {
            let listed: Vec<String> = dates.iter().map(|d| d.date.to_string()).collect();
            bail!("expected 3 [[dates]] groups, found {} ({})", dates.len(), listed.join(", "));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0].date == w[1].date) {
            bail!("date {} is listed twice", w[0].date);
        }
        if let Some(d) = dates.iter().find(|d| d.scenes.is_empty()) {
            bail!("date group {} has no scenes", d.date);
        }

        let fractions = SplitFractions::new(raw.split.fractions[0], raw.split.fractions[1], raw.split.fractions[2])?;
        ensure!(raw.split.cell_size >= 1, "split.cell_size must be at least 1");

        let pp = raw.postprocess;
        let mut postprocess = PostprocessParams::for_resolution(sensor.pixel_size, sensor.half_width, sensor.min_area_ha);
        if let Some(v) = pp.closing_radius {
            postprocess.closing_radius = v;
        }
        if let Some(v) = pp.expand_px {
            postprocess.expand_px = v;
        }
        if let Some(v) = pp.simplify_tolerance {
            postprocess.simplify_tolerance = v;
        }
        if let Some(v) = pp.min_area_ha {
            postprocess.min_area_ha = v;
        }
        postprocess.bin_edges_ha = pp.bin_edges_ha.unwrap_or_else(|| DEFAULT_BIN_EDGES_HA.to_vec());
        postprocess.validate()?;

        Ok(Self {
            sensor,
            tile_spec,
            reflectance_scale: raw.reflectance_scale,
            band_stack: raw.band_stack || raw.tile_source == TileSource::Bands,
            tile_source: raw.tile_source,
            work_dir: base.join(raw.work_dir),
            dates,
            parcels_path: base.join(raw.parcels.path),
            crop_rule: CropRule::parse(&raw.parcels.crop_rule)?,
            fractions,
            cell_size: raw.split.cell_size,
            seed: raw.split.seed,
            postprocess,
            histogram_svg: pp.histogram_svg,
        })
    }

    pub fn ndvi_stack_path(&self) -> PathBuf {
        self.work_dir.join("ndvi_stack.tif")
    }

    pub fn band_stack_path(&self) -> PathBuf {
        self.work_dir.join("band_stack.tif")
    }

    pub fn tile_image_path(&self) -> PathBuf {
        match self.tile_source {
            TileSource::Ndvi => self.ndvi_stack_path(),
            TileSource::Bands => self.band_stack_path(),
        }
    }

    pub fn mask_path(&self) -> PathBuf {
        self.work_dir.join("mask.tif")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.work_dir.join("manifest.json")
    }
}

/// Config text for a given scene layout; used by `synth`.
pub fn render_config(
    profile: Profile,
    dates: &[(NaiveDate, Vec<String>)],
    parcels: &str,
    cell_size: usize,
    seed: u64,
) -> String {
    let mut s = format!("profile = \"{}\"\nwork_dir = \"work\"\nband_stack = true\n", match profile {
        Profile::Sentinel2 => "sentinel2",
        Profile::Planetscope => "planetscope",
    });
    for (d, scenes) in dates {
        let list: Vec<String> = scenes.iter().map(|p| format!("\"{p}\"")).collect();
        s.push_str(&format!("\n[[dates]]\ndate = \"{d}\"\nscenes = [{}]\n", list.join(", ")));
    }
    s.push_str(&format!("\n[parcels]\npath = \"{parcels}\"\ncrop_rule = \"crop == true\"\n"));
    s.push_str(&format!("\n[split]\nfractions = [0.7, 0.2, 0.1]\ncell_size = {cell_size}\nseed = {seed}\n"));
    s
}
