use proptest::prelude::*;
use std::path::PathBuf;
use std::process::Command;
use wavemap::geometry::*;
use wavemap::scenario_cli::*;
use wavemap::target::*;
use wavemap::Error;

fn scratch_dir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("wavemap-test-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn small(out: &std::path::Path, extra: &str) -> ScenarioConfig {
    let text = format!(
        "spacetime.n = 2\ngrid.npts = 16\nrun.t_end = 1\noutput.stride = 3\noutput.path = {}\n{extra}",
        out.display()
    );
    parse_config(&text).unwrap()
}

#[test]
fn empty_file_gives_defaults() {
    let c = parse_config("").unwrap();
    assert_eq!(c, ScenarioConfig::default());
    assert_eq!(c.spacetime, WarpedSpacetime::de_sitter(3));
    assert_eq!(c.chart, TargetChart::sphere());
    assert_eq!((c.npts, c.t_end, c.init.epsilon), (64, 10.0, 1e-2));
    let c = parse_config("# only a comment\n\n   \n").unwrap();
    assert_eq!(c, ScenarioConfig::default());
}

#[test]
fn odd_grid_is_rejected() {
    match parse_config("grid.npts = 63") {
        Err(Error::Validation(m)) => assert_eq!(m, "grid.npts must be even"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn power_law_profile() {
    let c = parse_config("s.family = power\ns.p = 2").unwrap();
    assert_eq!(c.spacetime.s, SProfile::Power { p: 2.0 });
    let ci = conformal_factor_integrals(&c.spacetime, 1e4).unwrap();
    assert!(!ci.warning);
    // int (1+t)^-2 = 1 plus the f-part 1 - s(T)^-1
    assert!((ci.s_inv_integral - 1.0).abs() < 1e-3);
    assert!(ci.phi.is_finite());
}

#[test]
fn parse_errors_carry_line_numbers() {
    match parse_config("grid.npts = 16\nbogus.key = 1\n") {
        Err(Error::Parse { line, msg }) => {
            assert_eq!(line, 2);
            assert!(msg.contains("bogus.key"));
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse_config("\n\nno equals sign"), Err(Error::Parse { line: 3, .. })));
    let bad = [
        "spacetime.n = 4",
        "s.family = cosh",
        "a.family = osc\na.mu = 1.5",
        "N.family = cos\nN.beta = -1",
        "target.kind = torus",
        "target.kind = warped_surface\ntarget.f = cubic:-1",
        "grid.fd_order = 6",
        "run.t_end = -1",
        "run.cfl = 2",
        "init.epsilon = 0",
        "init.spinor = maybe",
        "init.chi = exact",
        "output.stride = 0",
        "grid.npts = many",
        "s.family = exp\ns.lambda = -1",
    ];
    for b in bad {
        assert!(matches!(parse_config(b), Err(Error::Validation(_))), "{b}");
    }
}

#[test]
fn later_keys_override() {
    let c = parse_config("grid.npts = 16\ngrid.npts = 32 # trailing comment").unwrap();
    assert_eq!(c.npts, 32);
}

prop_compose! {
    fn any_config()(
        n in 2usize..4,
        sfam in 0usize..3,
        sval in 0.5f64..3.0,
        osc in any::<bool>(),
        mu in -0.9f64..0.9,
        beta in prop::option::of(-0.9f64..0.9),
        kind in 0usize..4,
        c in 0.0f64..2.0,
        npts in 4usize..40,
        order in any::<bool>(),
        t_end in 0.1f64..50.0,
        eps in 1e-6f64..1.0,
        seed in any::<u64>(),
        spinor in any::<bool>(),
        cont in any::<bool>(),
        stride in 1usize..50,
    ) -> ScenarioConfig {
        let s = match sfam { 0 => SProfile::Const(sval), 1 => SProfile::Exp { lambda: sval }, _ => SProfile::Power { p: sval } };
        let a = if osc { AProfile::Osc { mu, omega: sval } } else { AProfile::Const(sval) };
        let lapse = beta.map(|beta| LapseProfile::Cos { beta }).unwrap_or(LapseProfile::One);
        let kind = match kind { 0 => TargetKind::Flat, 1 => TargetKind::SphereStereographic, 2 => TargetKind::WarpedSurface(WarpFamily::Sinh), _ => TargetKind::WarpedSurface(WarpFamily::Cubic { c }) };
        let mut cfg = ScenarioConfig::default();
        cfg.name = format!("case{seed}");
        cfg.spacetime = WarpedSpacetime::new(n, s, a, lapse).unwrap();
        cfg.chart = TargetChart { kind, chart_radius: 5.0 + sval };
        cfg.npts = 2 * npts;
        cfg.fd_order = if order { wavemap::fields::FdOrder::Four } else { wavemap::fields::FdOrder::Two };
        cfg.t_end = t_end;
        cfg.init.epsilon = eps;
        cfg.init.seed = seed;
        cfg.init.mode_cutoff = 3;
        cfg.init.spinor = spinor;
        cfg.init.chi_mode = if cont { wavemap::dynamics::ChiMode::Continuum } else { wavemap::dynamics::ChiMode::Discrete };
        cfg.output_path = PathBuf::from(format!("out/run{stride}"));
        cfg.output_stride = stride;
        cfg
    }
}

proptest! {
    #[test]
    fn config_round_trips(cfg in any_config()) {
        let text = cfg.to_text();
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

fn read_csv(dir: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(dir.join("series.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn simulate_writes_artifacts() {
    let dir = scratch_dir("sim");
    let cfg = small(&dir, "");
    let out = run_scenario(&cfg).unwrap();
    let s = &out.summary;
    assert!(s.completed && s.exit_code == 0 && s.error.is_none());
    assert!((s.last_good_t - 1.0).abs() < 1e-12);
    assert_eq!(s.gronwall.status, "pass");
    let (header, rows) = read_csv(&dir);
    assert_eq!(header.join(","), "t,E_map_0,E_map_1,E_spin_0,psi_l2,F_total,dirac_res,bound_value,bound_ok");
    assert_eq!(rows.len(), s.steps / 3 + 1);
    assert!(rows.iter().all(|r| r.len() == header.len() && r[8] == "true"));
    assert_eq!(rows[0][0].parse::<f64>().unwrap(), 0.0);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["exit_code"], 0);
    assert_eq!(json["gronwall"]["status"], "pass");
    assert!(json["phi"].as_f64().unwrap() > 0.0);
}

#[test]
fn pure_wave_map_run_has_zero_spinor_columns() {
    let dir = scratch_dir("nospin");
    let cfg = small(&dir, "init.spinor = off\n");
    run_scenario(&cfg).unwrap();
    let (header, rows) = read_csv(&dir);
    let cols: Vec<usize> = header.iter().enumerate().filter(|(_, h)| h.starts_with("E_spin") || *h == "psi_l2").map(|(i, _)| i).collect();
    assert!(!cols.is_empty());
    for r in rows {
        for &c in &cols {
            assert_eq!(r[c].parse::<f64>().unwrap(), 0.0);
        }
    }
}

#[test]
fn large_data_aborts_with_exit_two() {
    let dir = scratch_dir("large");
    let cfg = small(&dir, "init.epsilon = 10\ntarget.chart_radius = 0.3\nrun.t_end = 5\n");
    let out = run_scenario(&cfg).unwrap();
    assert_eq!(out.summary.exit_code, 2);
    assert!(!out.summary.completed);
    assert!(out.summary.error.as_deref().unwrap().contains("chart exit"));
    assert!(dir.join("summary.json").exists());
}

#[test]
fn static_background_is_outside_hypotheses() {
    let dir = scratch_dir("static");
    let cfg = small(&dir, "s.family = const\n");
    let out = run_scenario(&cfg).unwrap();
    assert_eq!(out.summary.exit_code, 0);
    assert!(out.summary.outside_hypotheses);
    assert_eq!(out.summary.gronwall.status, "outside_hypotheses");
    assert!((out.summary.phi - 1.0).abs() < 1e-10);
}

#[test]
fn verify_csv_format() {
    let rows = vec![
        (wavemap::verify::CheckResult::exact("a", 1e-12, 1e-10), false),
        (wavemap::verify::CheckResult::from_refinement("b", 1.6e-3, 1e-4, 4), true),
    ];
    let text = verify_csv(&rows);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "id,residual,slope,order,pass,expected_fail");
    assert!(lines[1].starts_with("a,1.000000e-12,,,true,false"));
    assert!(lines[2].starts_with("b,1.000000e-4,4.0000,4,true,true"));
}

#[test]
fn sweep_runs_each_config() {
    let dir = scratch_dir("sweep");
    let out = dir.join("out");
    for (name, extra) in [("one", ""), ("two", "target.kind = flat\n")] {
        let text = format!("spacetime.n = 2\ngrid.npts = 16\nrun.t_end = 0.5\noutput.path = {}\n{extra}", out.display());
        std::fs::write(dir.join(format!("{name}.cfg")), text).unwrap();
    }
    let results = run_sweep(&format!("{}/*.cfg", dir.display())).unwrap();
    assert_eq!(results.len(), 2);
    assert!(results.iter().all(|(_, r)| r.as_ref().unwrap().summary.exit_code == 0));
    assert!(out.join("one/series.csv").exists() && out.join("two/summary.json").exists());
    assert!(run_sweep(&format!("{}/*.none", dir.display())).is_err());
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_wavemap");
    let dir = scratch_dir("bin");
    let bad = dir.join("bad.cfg");
    std::fs::write(&bad, "grid.npts = 63\n").unwrap();
    let st = Command::new(exe).args(["simulate", bad.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(1));
    let good = dir.join("good.cfg");
    std::fs::write(&good, format!("spacetime.n = 2\ngrid.npts = 16\nrun.t_end = 0.2\noutput.path = {}\n", dir.join("o").display())).unwrap();
    let st = Command::new(exe).args(["simulate", good.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let big = dir.join("big.cfg");
    std::fs::write(&big, format!("spacetime.n = 2\ngrid.npts = 16\ninit.epsilon = 10\ntarget.chart_radius = 0.3\noutput.path = {}\n", dir.join("b").display())).unwrap();
    let st = Command::new(exe).args(["simulate", big.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(2));
}
