use psiflat::verify::random_dataset;
use psiflat::*;

fn trained_2_2_2() -> (Mlp, Dataset) {
    let data = random_dataset(2, 2, 24, 4);
    let net = Mlp::random(vec![2, 2, 2], InitConfig { radius: 0.5, seed: 4 }).unwrap();
    let cfg = TrainConfig {
        batch_size: 4,
        epochs: 50,
        seed: 4,
        ..Default::default()
    };
    (sgd_train(&net, &data, None, &cfg).unwrap().0, data)
}

#[test]
fn cells_match_single_point_evaluation() {
    let (net, data) = trained_2_2_2();
    let obj = PsiObjective::new(&net, &data).unwrap();
    let cfg = LandscapeConfig {
        resolution: (11, 11),
        seed: 2,
        ..Default::default()
    };
    let (xi, eta) = sample_directions(obj.dim(), &cfg);
    let center = obj.center();
    let grid = evaluate_grid(&center, &xi, &eta, &cfg, &obj).unwrap();

    let canon = canonicalize(&net).unwrap();
    let basis = extract_basis(&canon.net).unwrap();
    for (i, t1) in grid.t1.iter().enumerate() {
        for (j, t2) in grid.t2.iter().enumerate() {
            let eps: Vec<f64> = xi.iter().zip(&eta).map(|(a, b)| t1 * a + t2 * b).collect();
            let want = project_values_to_weights(&canon, &basis, &eps)
                .and_then(|w| w.loss(&data))
                .ok();
            match (grid.loss[i][j], want) {
                (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "({i},{j}) {a} vs {b}"),
                (None, None) => {}
                (a, b) => panic!("({i},{j}): grid {a:?}, direct {b:?}"),
            }
        }
    }
}

#[test]
fn exports_land_on_disk() {
    let (net, data) = trained_2_2_2();
    let obj = WeightObjective::new(net.dims(), &data);
    let cfg = LandscapeConfig {
        resolution: (9, 7),
        space: Space::Weight,
        ..Default::default()
    };
    let (xi, eta) = sample_directions(obj.dim(), &cfg);
    let grid = evaluate_grid(&net.flatten(), &xi, &eta, &cfg, &obj).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let csv = dir.path().join("g.csv");
    export_grid(&grid, &csv, ExportFormat::Csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("t1,t2,loss"));
    assert_eq!(text.lines().count(), 1 + 9 * 7);

    let json = dir.path().join("g.json");
    export_grid(&grid, &json, ExportFormat::Json).unwrap();
    let back = LandscapeGrid::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(back, grid);

    let svg = dir.path().join("g.svg");
    export_grid(&grid, &svg, ExportFormat::SvgContour).unwrap();
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") || text.starts_with("<?xml"));
    assert!(text.contains("<polyline") || text.contains("<path"));
}
