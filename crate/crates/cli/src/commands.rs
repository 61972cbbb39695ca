//! One function per subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use chrono::NaiveDate;
use fieldpipe::label::{build_class_mask_with_report, load_parcels, LabelError};
use fieldpipe::metrics::{evaluate_manifest, load_prediction};
use fieldpipe::postprocess::{field_stats, fields_to_geojson, histogram_svg, postprocess_mask};
use fieldpipe::raster::{
    compute_ndvi_scaled, is_nodata, median_composite, read_ndvi_stack, read_raster, stack_bands, stack_ndvi,
    write_class_mask, write_ndvi_stack, write_raster,
};
use fieldpipe::synthetic::synthetic_scene;
use fieldpipe::tiling::{
    assign_splits, export_tiles, plan_tiles, read_manifest, tile_area_km2, write_manifest, ManifestSummary,
};
use fieldpipe::{
    CropRule, FieldPolygon, FieldSizeStats, GridGeometry, ParcelSet, Raster, Split, TileManifest,
    BOUNDARY, DEFAULT_NODATA, INTERIOR, NON_CROP,
};

use crate::config::{render_config, PipelineConfig, Profile};

fn plan(dry: bool, steps: &[String]) -> bool {
    if dry {
        println!("plan:");
        for s in steps {
            println!("  {s}");
        }
    }
    dry
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn check_pixel_size(g: &GridGeometry, cfg: &PipelineConfig, what: &Path) -> Result<()> {
    let want = cfg.sensor.pixel_size;
    ensure!(
        (g.pixel_size - want).abs() <= 1e-9 * want.max(1.0),
        "{} has {} m pixels but the config expects {} m",
        what.display(),
        g.pixel_size,
        want
    );
    Ok(())
}

/// Red and NIR band indices of a 4-band scene.
fn red_nir(r: &Raster, path: &Path) -> Result<(usize, usize)> {
    match (r.band_index("R"), r.band_index("NIR")) {
        (Some(red), Some(nir)) => Ok((red, nir)),
        _ if r.band_count() == 4 => Ok((0, 3)),
        _ => bail!("{}: expected 4 bands R,G,B,NIR, got {}", path.display(), r.band_count()),
    }
}

fn composite_date(scenes: &[PathBuf], date: NaiveDate) -> Result<Raster> {
    let rasters = scenes
        .iter()
        .map(|p| read_raster(p).with_context(|| format!("reading scene {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    median_composite(&rasters).with_context(|| format!("compositing scenes for {date}"))
}

pub fn ndvi_stack(cfg: &PipelineConfig, dry: bool) -> Result<()> {
    let mut steps: Vec<String> = cfg
        .dates
        .iter()
        .map(|d| format!("composite {} from {} scene(s)", d.date, d.scenes.len()))
        .collect();
    steps.push(format!("write {}", cfg.ndvi_stack_path().display()));
    if cfg.band_stack {
        steps.push(format!("write {}", cfg.band_stack_path().display()));
    }
    if plan(dry, &steps) {
        return Ok(());
    }

    let mut ndvi = Vec::with_capacity(3);
    let mut composites = Vec::with_capacity(3);
    let mut geometry: Option<GridGeometry> = None;
    for group in &cfg.dates {
        let comp = composite_date(&group.scenes, group.date)?;
        let first = &group.scenes[0];
        check_pixel_size(comp.geometry(), cfg, first)?;
        match geometry {
            None => geometry = Some(*comp.geometry()),
            Some(g) if !g.same_grid(comp.geometry()) => {
                bail!("scenes for {} are on a different grid than earlier dates", group.date)
            }
            Some(_) => {}
        }
        let (red, nir) = red_nir(&comp, first)?;
        let mut band = compute_ndvi_scaled(comp.band(red), comp.band(nir), comp.nodata(), cfg.reflectance_scale)
            .with_context(|| format!("NDVI for {}", group.date))?;
        let src_nodata = comp.nodata();
        if !is_nodata(src_nodata, DEFAULT_NODATA) {
            for v in band.values_mut() {
                if is_nodata(*v, src_nodata) {
                    *v = DEFAULT_NODATA;
                }
            }
        }
        log::info!("{}: composited {} scene(s)", group.date, group.scenes.len());
        ndvi.push((group.date, band));
        if cfg.band_stack {
            composites.push((group.date, comp));
        }
    }
    let geometry = geometry.expect("three date groups");
    ensure_dir(&cfg.work_dir)?;
    let stack = stack_ndvi(ndvi, geometry, DEFAULT_NODATA)?;
    write_ndvi_stack(&stack, cfg.ndvi_stack_path())
        .with_context(|| format!("writing {}", cfg.ndvi_stack_path().display()))?;
    println!("wrote {} ({}x{}, 3 bands)", cfg.ndvi_stack_path().display(), geometry.width, geometry.height);
    if cfg.band_stack {
        let bands = stack_bands(composites)?;
        write_raster(&bands, cfg.band_stack_path())
            .with_context(|| format!("writing {}", cfg.band_stack_path().display()))?;
        println!("wrote {} (12 bands)", cfg.band_stack_path().display());
    }
    Ok(())
}

fn load_parcel_set(cfg: &PipelineConfig, crs_code: u32) -> Result<ParcelSet> {
    match load_parcels(&cfg.parcels_path, &cfg.crop_rule) {
        Ok(loaded) => {
            if !loaded.rejected.is_empty() {
                log::warn!("{} parcel(s) rejected", loaded.rejected.len());
            }
            Ok(loaded.parcels)
        }
        Err(LabelError::NoParcels { total: 0, .. }) => {
            log::warn!("{} has no features; the mask will be all non-crop", cfg.parcels_path.display());
            Ok(ParcelSet::empty(crs_code))
        }
        Err(e) => Err(e).with_context(|| format!("loading {}", cfg.parcels_path.display())),
    }
}

pub fn make_mask(cfg: &PipelineConfig, dry: bool) -> Result<()> {
    let reference = cfg.ndvi_stack_path();
    let steps = [
        format!("read grid from {}", reference.display()),
        format!("read parcels from {} (crop rule `{}`)", cfg.parcels_path.display(), cfg.crop_rule),
        format!("rasterise with half width {} m", cfg.sensor.half_width),
        format!("write {}", cfg.mask_path().display()),
    ];
    if plan(dry, &steps) {
        return Ok(());
    }
    let stack = read_ndvi_stack(&reference).with_context(|| format!("reading {}", reference.display()))?;
    let g = *stack.raster().geometry();
    check_pixel_size(&g, cfg, &reference)?;
    let parcels = load_parcel_set(cfg, g.crs_code)?;
    if !parcels.is_empty() && parcels.crop_parcels().next().is_none() {
        log::warn!("no parcel matches crop rule `{}`", cfg.crop_rule);
    }
    let (mask, report) = build_class_mask_with_report(&parcels, &g, cfg.sensor.half_width)?;
    for (a, b) in &report.overlapping {
        log::warn!("crop parcels {a} and {b} overlap");
    }
    write_class_mask(&mask, cfg.mask_path()).with_context(|| format!("writing {}", cfg.mask_path().display()))?;
    println!(
        "wrote {}: non-crop {}, interior {}, boundary {} px",
        cfg.mask_path().display(),
        mask.count(NON_CROP),
        mask.count(INTERIOR),
        mask.count(BOUNDARY)
    );
    Ok(())
}

fn print_summary(m: &TileManifest) -> Result<()> {
    let s = ManifestSummary::of(m);
    let area = tile_area_km2(m.spec.tile_size, m.source_geometry.pixel_size)?;
    println!("tiles: {}", s.tiles);
    for split in Split::ALL {
        println!("  {split}: {} ({:.3})", s.per_split[&split], s.realized_fractions[split as usize]);
    }
    println!("tile size: {} px, {area} km2 per tile", m.spec.tile_size);
    println!("cross-split overlapping pairs: {}", s.cross_split_overlaps);
    Ok(())
}

fn save_manifest(m: &TileManifest, path: &Path) -> Result<()> {
    write_manifest(m, path).with_context(|| format!("writing {}", path.display()))?;
    let back = read_manifest(path).with_context(|| format!("re-reading {}", path.display()))?;
    ensure!(back == *m, "{} did not round-trip", path.display());
    Ok(())
}

pub fn tile(cfg: &PipelineConfig, dry: bool) -> Result<()> {
    let image_path = cfg.tile_image_path();
    let steps = [
        format!("read {} and {}", image_path.display(), cfg.mask_path().display()),
        format!(
            "plan {} px tiles at stride {} ({:?})",
            cfg.tile_spec.tile_size, cfg.tile_spec.stride, cfg.tile_spec.edge_policy
        ),
        format!("assign splits {:?} over {}-stride cells, seed {}", cfg.fractions.as_array(), cfg.cell_size, cfg.seed),
        format!("write tiles under {}", cfg.work_dir.join("tiles").display()),
        format!("write {}", cfg.manifest_path().display()),
    ];
    if plan(dry, &steps) {
        return Ok(());
    }
    let image = read_raster(&image_path).with_context(|| format!("reading {}", image_path.display()))?;
    let mask = fieldpipe::raster::read_class_mask(cfg.mask_path())
        .with_context(|| format!("reading {}", cfg.mask_path().display()))?;
    ensure!(
        image.geometry().same_grid(mask.geometry()),
        "{} and {} are not aligned",
        image_path.display(),
        cfg.mask_path().display()
    );
    let g = *image.geometry();
    let windows = plan_tiles(&g, &cfg.tile_spec);
    let manifest = assign_splits(&windows, &g, &cfg.tile_spec, cfg.fractions, cfg.cell_size, cfg.seed)?;
    export_tiles(&image, &mask, &manifest, &cfg.work_dir)?;
    save_manifest(&manifest, &cfg.manifest_path())?;
    print_summary(&manifest)
}

pub fn split(cfg: &PipelineConfig, dry: bool) -> Result<()> {
    let path = cfg.manifest_path();
    let steps = [
        format!("read {}", path.display()),
        format!("assign splits {:?} over {}-stride cells, seed {}", cfg.fractions.as_array(), cfg.cell_size, cfg.seed),
        format!("write {}", path.display()),
    ];
    if plan(dry, &steps) {
        return Ok(());
    }
    let old = read_manifest(&path).with_context(|| format!("reading {}", path.display()))?;
    let windows: Vec<_> = old.records.iter().map(|r| r.window).collect();
    let new = assign_splits(&windows, &old.source_geometry, &old.spec, cfg.fractions, cfg.cell_size, cfg.seed)?;
    for (a, b) in old.records.iter().zip(&new.records) {
        ensure!(a.image_path == b.image_path && a.mask_path == b.mask_path, "tile {} paths changed", a.tile_id);
    }
    save_manifest(&new, &path)?;
    print_summary(&new)
}

pub fn evaluate(
    cfg: &PipelineConfig,
    predictions: &Path,
    split: Option<Split>,
    manifest: Option<PathBuf>,
    out: Option<PathBuf>,
    dry: bool,
) -> Result<()> {
    let manifest_path = manifest.unwrap_or_else(|| cfg.manifest_path());
    let out = out.unwrap_or_else(|| cfg.work_dir.join("iou_report.json"));
    let scope = split.map_or("all splits".to_string(), |s| format!("split {s}"));
    let steps = [
        format!("read {}", manifest_path.display()),
        format!("score predictions in {} over {scope}", predictions.display()),
        format!("write {}", out.display()),
    ];
    if plan(dry, &steps) {
        return Ok(());
    }
    let m = read_manifest(&manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let report = evaluate_manifest(&m, base, predictions, split)?;
    write_text(&out, &report.to_json())?;
    println!("{report}");
    println!("wrote {}", out.display());
    Ok(())
}

fn write_stats(cfg: &PipelineConfig, stats: &FieldSizeStats, out_dir: &Path) -> Result<()> {
    let path = out_dir.join("field_stats.json");
    write_text(&path, &(serde_json::to_string_pretty(stats)? + "\n"))?;
    println!(
        "fields: {}, median {:.4} ha, min {:.4} ha, max {:.4} ha, total {:.4} ha",
        stats.count, stats.median_ha, stats.min_ha, stats.max_ha, stats.total_ha
    );
    println!("wrote {}", path.display());
    if cfg.histogram_svg {
        let svg = out_dir.join("field_sizes.svg");
        write_text(&svg, &histogram_svg(stats))?;
        println!("wrote {}", svg.display());
    }
    Ok(())
}

pub fn postprocess(cfg: &PipelineConfig, prediction: &Path, out: Option<PathBuf>, dry: bool) -> Result<()> {
    let out_dir = out.unwrap_or_else(|| cfg.work_dir.clone());
    let p = &cfg.postprocess;
    let steps = [
        format!("read {}", prediction.display()),
        format!(
            "close radius {} px, expand {} px, simplify {} m, drop below {} ha",
            p.closing_radius, p.expand_px, p.simplify_tolerance, p.min_area_ha
        ),
        format!("write fields.geojson and field_stats.json under {}", out_dir.display()),
    ];
    if plan(dry, &steps) {
        return Ok(());
    }
    let mask = load_prediction(prediction).with_context(|| format!("reading {}", prediction.display()))?;
    let result = postprocess_mask(&mask, p)?;
    let crs = mask.geometry().crs_code;
    let fields_path = out_dir.join("fields.geojson");
    let gj = serde_json::to_string_pretty(&fields_to_geojson(&result.fields, crs))? + "\n";
    write_text(&fields_path, &gj)?;
    println!("wrote {} ({} fields)", fields_path.display(), result.fields.len());
    match &result.stats {
        Some(stats) => write_stats(cfg, stats, &out_dir),
        None => {
            log::warn!("no field reaches {} ha; polygon set is empty", p.min_area_ha);
            Ok(())
        }
    }
}

pub fn stats(cfg: &PipelineConfig, fields: Option<PathBuf>, out: Option<PathBuf>, dry: bool) -> Result<()> {
    let fields_path = fields.unwrap_or_else(|| cfg.work_dir.join("fields.geojson"));
    let out_dir = out.unwrap_or_else(|| cfg.work_dir.clone());
    let steps = [
        format!("read {}", fields_path.display()),
        format!("histogram over edges {:?} ha", cfg.postprocess.bin_edges_ha),
        format!("write field_stats.json under {}", out_dir.display()),
    ];
    if plan(dry, &steps) {
        return Ok(());
    }
    let loaded = load_parcels(&fields_path, &CropRule::all())
        .with_context(|| format!("reading {}", fields_path.display()))?;
    let polys: Vec<FieldPolygon> = loaded
        .parcels
        .parcels()
        .iter()
        .flat_map(|p| p.geometry.0.iter().map(move |poly| (p.id, poly)))
        .map(|(id, poly)| FieldPolygon::new(id as u32, poly.clone(), 0))
        .collect();
    let stats = field_stats(&polys, &cfg.postprocess.bin_edges_ha)?;
    write_stats(cfg, &stats, &out_dir)
}

pub fn synth(
    out: &Path,
    size: usize,
    profile: Profile,
    (rows, cols): (usize, usize),
    scenes_per_date: usize,
    seed: u64,
    dry: bool,
) -> Result<()> {
    ensure!(rows >= 1 && cols >= 1 && scenes_per_date >= 1, "rows, cols and scenes per date must be positive");
    let ps = profile.defaults().pixel_size;
    let steps = [
        format!("{size}x{size} px at {ps} m, {rows}x{cols} fields, seed {seed}"),
        format!("write scenes, parcels.geojson and fieldpipe.toml under {}", out.display()),
    ];
    if plan(dry, &steps) {
        return Ok(());
    }
    let g = GridGeometry::new(500_000.0, 5_000_000.0 + size as f64 * ps, ps, size, size, 32633)?;
    let gap = ((size / rows.max(cols)) / 16).max(2);
    ensure!(size / rows.max(cols) > 4 * gap + 2, "{size} px is too small for a {rows}x{cols} field grid");
    let scene = synthetic_scene(g, rows, cols, gap, scenes_per_date, seed);
    ensure_dir(&out.join("scenes"))?;
    let mut dates = Vec::new();
    for (date, rasters) in scene.dates.iter().zip(&scene.scenes) {
        let mut names = Vec::new();
        for (j, r) in rasters.iter().enumerate() {
            let rel = format!("scenes/{date}_{}.tif", j + 1);
            write_raster(r, out.join(&rel)).with_context(|| format!("writing {rel}"))?;
            names.push(rel);
        }
        dates.push((*date, names));
    }
    write_text(&out.join("parcels.geojson"), &scene.parcels.to_geojson())?;
    // at least six location cells per axis so every split gets some
    let d = profile.defaults();
    let strides = size.saturating_sub(d.tile_size) / d.stride + 1;
    let cell_size = (strides / 6).max(1);
    let cfg = render_config(profile, &dates, "parcels.geojson", cell_size, seed);
    write_text(&out.join("fieldpipe.toml"), &cfg)?;
    println!("wrote synthetic scene with {} fields to {}", scene.fields_px.len(), out.display());
    Ok(())
}
