//! Tiles, manifest, evaluation and post-processing wired together.

use fieldpipe::label::build_class_mask;
use fieldpipe::metrics::{evaluate_manifest, MetricsError};
use fieldpipe::postprocess::{one_hot_encode, postprocess_mask, PostprocessParams};
use fieldpipe::raster::{compute_ndvi, median_composite, read_raster, stack_bands, stack_ndvi, write_class_mask, write_raster};
use fieldpipe::synthetic::synthetic_scene;
use fieldpipe::tiling::{assign_splits, cross_split_overlaps, export_tiles, plan_tiles, read_manifest, write_manifest};
use fieldpipe::{ClassMask, EdgePolicy, GridGeometry, Raster, Split, SplitFractions, TileSpec, DEFAULT_NODATA};

fn scene() -> (fieldpipe::synthetic::SyntheticScene, Raster, ClassMask) {
    let g = GridGeometry::new(600_000.0, 5_700_000.0, 10.0, 256, 256, 32631).unwrap();
    let s = synthetic_scene(g, 4, 4, 3, 2, 17);
    let ndvi: Vec<_> = s
        .scenes
        .iter()
        .zip(s.dates)
        .map(|(group, d)| {
            let c = median_composite(group).unwrap();
            (d, compute_ndvi(c.band(0), c.band(3), DEFAULT_NODATA).unwrap())
        })
        .collect();
    let stack = stack_ndvi(ndvi, g, DEFAULT_NODATA).unwrap().into_raster();
    let mask = build_class_mask(&s.parcels, &g, 10.0).unwrap();
    (s, stack, mask)
}

#[test]
fn tiles_manifest_and_perfect_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let (_, stack, mask) = scene();
    let spec = TileSpec::new(64, 32, EdgePolicy::SnapToEdge).unwrap();
    let windows = plan_tiles(stack.geometry(), &spec);
    let manifest = assign_splits(&windows, stack.geometry(), &spec, SplitFractions::default(), 2, 5).unwrap();
    export_tiles(&stack, &mask, &manifest, dir.path()).unwrap();
    write_manifest(&manifest, dir.path().join("manifest.json")).unwrap();
    let back = read_manifest(dir.path().join("manifest.json")).unwrap();
    assert_eq!(back, manifest);
    assert!(cross_split_overlaps(&manifest) > 0);

    let preds = dir.path().join("preds");
    std::fs::create_dir_all(&preds).unwrap();
    for r in &manifest.records {
        let m = fieldpipe::raster::read_class_mask(dir.path().join(&r.mask_path)).unwrap();
        let img = read_raster(dir.path().join(&r.image_path)).unwrap();
        assert_eq!(img.geometry(), m.geometry());
        assert_eq!(img.band_names(), &["NDVI1", "NDVI2", "NDVI3"]);
        write_raster(one_hot_encode(&m, DEFAULT_NODATA).raster(), preds.join(format!("{}_pred.tif", r.tile_id))).unwrap();
    }
    let report = evaluate_manifest(&manifest, dir.path(), &preds, None).unwrap();
    assert_eq!(report.mean_iou, 1.0);
    assert!(report.per_class_iou.values().all(|v| *v == Some(1.0)));
    let val = evaluate_manifest(&manifest, dir.path(), &preds, Some(Split::Val)).unwrap();
    assert_eq!(val.per_tile.len(), manifest.count(Split::Val));

    let gone = &manifest.records[3].tile_id;
    std::fs::remove_file(preds.join(format!("{gone}_pred.tif"))).unwrap();
    match evaluate_manifest(&manifest, dir.path(), &preds, None) {
        Err(MetricsError::MissingPredictions(ids)) => assert_eq!(&ids, &[gone.clone()]),
        other => panic!("expected missing prediction error, got {other:?}"),
    }
}

#[test]
fn global_and_per_tile_means_differ_on_imbalanced_tiles() {
    let dir = tempfile::tempdir().unwrap();
    let g = GridGeometry::new(0.0, 40.0, 10.0, 8, 4, 32631).unwrap();
    // tile A: all interior, predicted perfectly
    // tile B: 15 boundary pixels and one interior, predicted all boundary
    let mut truth = vec![1u8; 32];
    let mut pred = vec![1u8; 32];
    for r in 0..4 {
        for c in 4..8 {
            truth[r * 8 + c] = 2;
            pred[r * 8 + c] = 2;
        }
    }
    truth[7] = 1;
    let truth = ClassMask::new(g, truth).unwrap();
    let pred = ClassMask::new(g, pred).unwrap();
    let spec = TileSpec::new(4, 4, EdgePolicy::DropPartial).unwrap();
    let windows = plan_tiles(&g, &spec);
    assert_eq!(windows.len(), 2);
    let manifest = assign_splits(&windows, &g, &spec, SplitFractions::default(), 1, 0).unwrap();
    let image = Raster::with_default_names(g, vec![fieldpipe::Band::filled(8, 4, 0.5)], DEFAULT_NODATA).unwrap();
    export_tiles(&image, &truth, &manifest, dir.path()).unwrap();
    for r in &manifest.records {
        let w = r.window;
        let p = pred.crop(w.col_off, w.row_off, w.size, w.size).unwrap();
        write_class_mask(&p, dir.path().join(format!("{}_pred.tif", r.tile_id))).unwrap();
    }
    let report = evaluate_manifest(&manifest, dir.path(), dir.path(), None).unwrap();
    // global: interior 16/17, boundary 15/16
    let global = (16.0 / 17.0 + 15.0 / 16.0) / 2.0;
    // per tile: A = 1.0; B = (0/1 + 15/16) / 2
    let per_tile = (1.0 + (0.0 + 15.0 / 16.0) / 2.0) / 2.0;
    assert!((report.mean_iou - global).abs() < 1e-12);
    assert!((report.per_tile_mean_iou_average.unwrap() - per_tile).abs() < 1e-12);
    assert!((report.mean_iou - per_tile).abs() > 0.1);
}

#[test]
fn twelve_band_stack_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _, _) = scene();
    let composites: Vec<_> = s.scenes.iter().zip(s.dates).map(|(g, d)| (d, median_composite(g).unwrap())).collect();
    let stack = stack_bands(composites).unwrap();
    assert_eq!(stack.band_count(), 12);
    assert_eq!(stack.band_names()[11], "NIR3");
    let path = dir.path().join("bands.tif");
    write_raster(&stack, &path).unwrap();
    assert_eq!(read_raster(&path).unwrap(), stack);
}

#[test]
fn postprocess_recovers_fields() {
    let (s, _, mask) = scene();
    let params = PostprocessParams::for_resolution(10.0, 10.0, 0.5);
    let out = postprocess_mask(&mask, &params).unwrap();
    assert_eq!(out.fields.len(), s.fields_px.len());
    let truth: f64 = s.fields_px.iter().map(|&(c0, r0, c1, r1)| ((c1 - c0) * (r1 - r0)) as f64 * 100.0 / 1e4).sum();
    let got: f64 = out.fields.iter().map(|f| f.area_ha).sum();
    assert!((got - truth).abs() / truth < 0.05, "{got} vs {truth}");
    let stats = out.stats.unwrap();
    assert!((stats.histogram.iter().map(|b| b.percent).sum::<f64>() - 100.0).abs() < 1e-6);
}
