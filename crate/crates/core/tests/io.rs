use std::fs;
use std::path::Path;

use meshfit::config::RunConfig;
use meshfit::depthio::{
    read_csv_grid, read_obj, read_pfm, read_pgm16, read_ply, write_csv_grid, write_obj, write_pfm, write_pgm16,
    write_ply, Pfm, Pgm16,
};
use meshfit::eval::{
    density_from_residuals, read_residuals, residuals, run_ablation, write_residuals, FitRequest,
};
use meshfit::synth::{generate, SceneSpec};
use meshfit::{
    accurate_density, read_depth, read_landmarks, run_fit, solve, triangulate, write_depth, write_mesh, DepthGrid,
    DepthKind, Error, EvalReport, Intrinsics, Landmark, Mesh2D, MeshKind, SolverConfig, VertexState,
};
use tempfile::tempdir;

fn grid(w: usize, h: usize, seed: u64) -> DepthGrid<f64> {
    let mut spec = SceneSpec::bowl(w, h);
    spec.noise_sigma = 0.01;
    spec.invalid_frac = 0.1;
    spec.seed = seed;
    generate::<f64>(&spec).unwrap().observed
}

#[test]
fn csv_depth_becomes_inverse_depth() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("d.csv");
    fs::write(&p, "1,2\n4,0.5\n").unwrap();
    let g = read_depth::<f64>(&p, DepthKind::Csv).unwrap();
    assert_eq!((g.width(), g.height()), (2, 2));
    assert_eq!(g.values(), &[1.0, 0.5, 0.25, 2.0]);
    assert_eq!(g.valid_count(), 4);
}

#[test]
fn non_positive_depth_is_invalid() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("d.csv");
    fs::write(&p, "0,2\n-1,nan\n").unwrap();
    let g = read_depth::<f64>(&p, DepthKind::Csv).unwrap();
    assert_eq!(g.mask(), &[false, true, false, false]);
}

#[test]
fn raw_formats_round_trip_bit_exactly() {
    let dir = tempdir().unwrap();
    for little_endian in [true, false] {
        let pfm = Pfm {
            width: 5,
            height: 3,
            data: (0..15).map(|k| 0.1 + k as f32 * 0.37).collect(),
            little_endian,
        };
        let p = dir.path().join("a.pfm");
        write_pfm(&p, &pfm).unwrap();
        let bytes = fs::read(&p).unwrap();
        let back = read_pfm(&p).unwrap();
        assert_eq!(back, pfm);
        write_pfm(&p, &back).unwrap();
        assert_eq!(fs::read(&p).unwrap(), bytes);
    }

    let pgm = Pgm16 {
        width: 4,
        height: 2,
        data: vec![0, 1, 255, 256, 1000, 40000, 65535, 7],
        scale: 2.5e-4,
    };
    let p = dir.path().join("a.pgm");
    write_pgm16(&p, &pgm).unwrap();
    assert_eq!(read_pgm16(&p).unwrap(), pgm);

    let data = vec![1.0, 0.1 + 0.2, 1e-300, 123456.789];
    let p = dir.path().join("a.csv");
    write_csv_grid(&p, 2, 2, &data).unwrap();
    assert_eq!(read_csv_grid(&p).unwrap(), (2, 2, data));
}

#[test]
fn pfm_rows_are_stored_bottom_up() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("b.pfm");
    let mut bytes = b"Pf\n2 2\n-1.0\n".to_vec();
    for v in [3.0f32, 4.0, 1.0, 2.0] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&p, bytes).unwrap();
    let pfm = read_pfm(&p).unwrap();
    assert_eq!(pfm.data, vec![1.0, 2.0, 3.0, 4.0]);
    assert!(pfm.little_endian);
}

#[test]
fn depth_files_round_trip() {
    let dir = tempdir().unwrap();
    let g = grid(20, 15, 3);
    for kind in [DepthKind::Pfm, DepthKind::Csv] {
        let p = dir.path().join(format!("g.{}", kind.extension()));
        write_depth(&g, &p, kind).unwrap();
        let first = fs::read(&p).unwrap();
        let back = read_depth::<f64>(&p, kind).unwrap();
        assert_eq!(back.mask(), g.mask());
        write_depth(&back, &p, kind).unwrap();
        assert_eq!(fs::read(&p).unwrap(), first);
    }
    let p = dir.path().join("g.pgm");
    write_depth(&g, &p, DepthKind::Pgm16).unwrap();
    let back = read_depth::<f64>(&p, DepthKind::Pgm16).unwrap();
    assert_eq!(back.mask(), g.mask());
    for k in 0..g.len() {
        if let (Some(a), Some(b)) = (g.get(k), back.get(k)) {
            // Quantized to a millimetre of depth.
            assert!((1.0 / a - 1.0 / b).abs() <= 0.5e-3 + 1e-9);
        }
    }
}

#[test]
fn malformed_inputs_are_rejected() {
    let dir = tempdir().unwrap();
    let bad_header = dir.path().join("x.pfm");
    fs::write(&bad_header, b"P7\n2 2\n-1.0\n").unwrap();
    assert!(matches!(read_pfm(&bad_header), Err(Error::Format { .. })));

    let short = dir.path().join("y.pfm");
    fs::write(&short, b"Pf\n2 2\n-1.0\n\0\0\0\0").unwrap();
    assert!(matches!(read_pfm(&short), Err(Error::Format { .. })));

    let ragged = dir.path().join("z.csv");
    fs::write(&ragged, "1,2\n3\n").unwrap();
    assert!(read_csv_grid(&ragged).is_err());

    let pgm = dir.path().join("w.pgm");
    write_pgm16(
        &pgm,
        &Pgm16 {
            width: 1,
            height: 1,
            data: vec![5],
            scale: 1.0,
        },
    )
    .unwrap();
    fs::remove_file(meshfit::depthio::pgm_scale_path(&pgm)).unwrap();
    assert!(read_pgm16(&pgm).is_err());

    let missing = dir.path().join("missing.pfm");
    assert!(read_pfm(&missing).unwrap_err().is_io());
    assert!(DepthKind::from_path(Path::new("a.exr")).is_err());
}

#[test]
fn landmark_files_parse() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("lm.csv");
    fs::write(&p, "# u1,u2,depth\n10,5,2.0\n\n3.5,4.25\n1,1,-3\n").unwrap();
    let set = read_landmarks::<f64>(&p).unwrap();
    assert_eq!(set.rejected, 1);
    assert_eq!(set.landmarks, vec![Landmark::new(10.0, 5.0, Some(0.5)), Landmark::new(3.5, 4.25, None)]);

    fs::write(&p, "1,2,3\nfoo,2\n").unwrap();
    assert!(matches!(read_landmarks::<f64>(&p), Err(Error::Parse { line: 2, .. })));

    fs::write(&p, "").unwrap();
    assert!(read_landmarks::<f64>(&p).unwrap().landmarks.is_empty());
}

fn fitted_mesh() -> Mesh2D<f64> {
    let g = grid(32, 24, 5);
    let mesh = triangulate(&[], (32, 24), Some(8)).unwrap();
    solve(&mesh, &g, &SolverConfig::default()).unwrap().mesh
}

#[test]
fn obj_and_ply_round_trip() {
    let dir = tempdir().unwrap();
    let mesh = fitted_mesh();
    let intr = Intrinsics::default_for(32, 24);
    let file = meshfit::MeshFile::from_mesh(&mesh, &intr).unwrap();

    let obj = dir.path().join("m.obj");
    write_obj(&obj, &file).unwrap();
    let back = read_obj(&obj).unwrap();
    assert_eq!(back.faces, file.faces);
    for (a, b) in back.vertices.iter().zip(&file.vertices) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() <= 1e-6 * b[k].abs().max(1.0));
        }
    }

    let ply = dir.path().join("m.ply");
    write_mesh(&mesh, &intr, &ply, MeshKind::Ply).unwrap();
    let back = read_ply(&ply).unwrap();
    assert_eq!(back.faces.len(), mesh.triangles().len());
    assert_eq!(back.faces, file.faces);
    for (a, b) in back.vertices.iter().zip(&file.vertices) {
        for k in 0..3 {
            assert_eq!(a[k], b[k] as f32 as f64);
        }
    }
    write_ply(&ply, &back).unwrap();
    assert_eq!(read_ply(&ply).unwrap(), back);
}

#[test]
fn principal_point_back_projects_onto_the_axis() {
    let intr = Intrinsics {
        fx: 100.0,
        fy: 100.0,
        cx: 10.0,
        cy: 8.0,
    };
    let verts = vec![
        VertexState::steiner([10.0, 8.0]),
        VertexState::steiner([0.0, 0.0]),
        VertexState::steiner([20.0, 0.0]),
    ];
    let mut mesh = Mesh2D::from_triangles(21, 17, verts, vec![[0, 1, 2]]).unwrap();
    mesh.set_xi(&[0.5, 1.0, 1.0]).unwrap();
    let file = meshfit::MeshFile::from_mesh(&mesh, &intr).unwrap();
    assert_eq!(file.vertices[0], [0.0, 0.0, 2.0]);
    assert_eq!(file.vertices[1], [-0.1, -0.08, 1.0]);

    mesh.set_xi(&[0.0, 1.0, 1.0]).unwrap();
    assert!(meshfit::MeshFile::from_mesh(&mesh, &intr).is_err());
}

#[test]
fn residual_dump_reproduces_density() {
    let dir = tempdir().unwrap();
    let mesh = fitted_mesh();
    let truth = generate::<f64>(&SceneSpec::bowl(32, 24)).unwrap().truth;
    let est = meshfit::eval::render_inverse_depth(&mesh).unwrap();
    let density = accurate_density(&est, &truth, 0.05).unwrap();
    let p = dir.path().join("res.csv");
    write_residuals(&p, &residuals(&est, &truth).unwrap()).unwrap();
    let back = read_residuals(&p).unwrap();
    assert_eq!(density_from_residuals(&back, 0.05).unwrap(), density);
}

#[test]
fn density_counts_relative_errors() {
    let truth = DepthGrid::new(4, 1, vec![1.0, 2.0, 0.0, 1.0], vec![true, true, false, true]).unwrap();
    let est = [1.05, 2.5, 7.0, f64::NAN];
    assert_eq!(accurate_density(&est, &truth, 0.1).unwrap(), 1.0 / 3.0);
    let none = DepthGrid::new(1, 1, vec![0.0], vec![false]).unwrap();
    assert!(accurate_density(&[1.0], &none, 0.1).is_err());
}

fn write_plane_inputs(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let scene = generate::<f64>(&SceneSpec::plane(64, 64, 0.002, -0.001, 0.5)).unwrap();
    let depth = dir.join("obs.pfm");
    let truth = dir.join("truth.pfm");
    write_depth(&scene.observed, &depth, DepthKind::Pfm).unwrap();
    write_depth(&scene.truth, &truth, DepthKind::Pfm).unwrap();
    (depth, truth)
}

#[test]
fn fit_pipeline_reports_and_round_trips() {
    let dir = tempdir().unwrap();
    let (depth, truth) = write_plane_inputs(dir.path());
    let req = FitRequest {
        depth,
        landmarks: None,
        truth: Some(truth),
        config: RunConfig::default(),
        mesh_out: Some(dir.path().join("m.obj")),
        mesh_kind: MeshKind::Obj,
    };
    let (fit, report) = run_fit(&req).unwrap();
    assert!(fit.diagnostics.energy.smooth < 1e-3);
    assert!(report.accuracy.as_ref().unwrap().mean_accurate_density > 0.99);
    assert_eq!(read_obj(&dir.path().join("m.obj")).unwrap().faces.len(), fit.mesh.triangles().len());

    let text = report.to_toml();
    assert_eq!(EvalReport::from_toml(&text).unwrap(), report);
    let (_, again) = run_fit(&req).unwrap();
    assert_eq!(again.without_timing().to_toml(), report.without_timing().to_toml());
}

#[test]
fn zero_lambda_is_accepted() {
    let dir = tempdir().unwrap();
    let (depth, _) = write_plane_inputs(dir.path());
    let config = RunConfig::parse("lambda = 0.0\nmax_iters = 20\n").unwrap();
    let req = FitRequest {
        depth,
        landmarks: None,
        truth: None,
        config,
        mesh_out: None,
        mesh_kind: MeshKind::Ply,
    };
    let (fit, _) = run_fit(&req).unwrap();
    assert_eq!(fit.diagnostics.energy.total, fit.diagnostics.energy.smooth);
}

#[test]
fn config_round_trips_and_rejects_unknown_keys() {
    let text = "lambda = 0.3\nmax_iters = 50\nsteiner = 25\nfx = 100.0\nfy = 100.0\ncx = 10.0\ncy = 8.0\n";
    let cfg = RunConfig::parse(text).unwrap();
    assert_eq!(cfg.solver.lambda, 0.3);
    assert_eq!(cfg.steiner, Some(25));
    assert_eq!(RunConfig::parse(&cfg.to_config_string()).unwrap(), cfg);
    assert!(matches!(RunConfig::parse("lamda = 1.0"), Err(Error::InvalidConfig(_))));
    assert!(RunConfig::parse("lambda = -1.0").is_err());
    assert!(RunConfig::parse("fx = 100.0").is_err());
}

#[test]
fn ablation_on_a_plane_is_dense() {
    let spec = SceneSpec::plane(64, 48, 0.002, 0.001, 0.6);
    let cfg = RunConfig::default();
    let table = run_ablation(&spec, &[40, 20, 10], &cfg, 1).unwrap();
    assert_eq!(table.row.len(), 3);
    for row in &table.row {
        assert!(row.accurate_density > 0.99, "{row:?}");
    }
    assert!(table.row[0].vertices < table.row[2].vertices);
    assert!(run_ablation(&spec, &[], &cfg, 1).is_err());
    let csv = table.to_csv();
    assert_eq!(csv.lines().count(), 4);
}
