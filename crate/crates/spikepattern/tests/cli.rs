use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_spikepattern");

const SMALL: &str =
    "mesh_level = 6\ndt = 0.01\nt_end = 2\nsnapshot_times = 0, 1, 2\nmonitor_stride = 10\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn help_version_and_usage_errors() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["--help"])), 0);
    assert_eq!(code(&run(d.path(), &["--version"])), 0);
    assert_eq!(code(&run(d.path(), &[])), 1);
    assert_eq!(code(&run(d.path(), &["frobnicate"])), 1);
    let o = run(d.path(), &["preset", "Fig7"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Fig7"));
    // Preset names are case-insensitive.
    let o = run(d.path(), &["--out", "x", "preset", "dispersionplot"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn analyze_without_positive_states() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), "c.cfg", "a1 = 2\nd1 = 1\nkappa1 = 1.5\n");
    let o = run(d.path(), &["--config", &cfg, "analyze"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("positive steady states: none"), "{stdout}");
    let report = fs::read_to_string(d.path().join("report.txt")).unwrap();
    assert_eq!(report, stdout);
    // Only the header: no dispersion without a positive state.
    let csv = fs::read_to_string(d.path().join("dispersion.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn analyze_reports_instability() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        d.path(),
        &["--preset", "DispersionPlot", "analyze", "--k-max", "8"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = fs::read_to_string(d.path().join("report.txt")).unwrap();
    assert!(report.contains("kinetic stability: Stable"));
    assert!(report.contains("diffusion-driven instability: true"));
    let mut r = csv::Reader::from_path(d.path().join("dispersion.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        [
            "k",
            "q",
            "re_lambda_plus",
            "im_lambda_plus",
            "re_lambda_minus",
            "im_lambda_minus"
        ]
    );
    assert_eq!(r.records().count(), 9);
}

#[test]
fn configuration_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    for (text, needle) in [
        ("kappa1 = 0\n", "kappa1"),
        ("kappa1 = -2\n", "kappa1"),
        ("a1 = 2\n\nfoo = 3\n", "line 3"),
        ("d1 1\n", "line 1"),
        ("dt = abc\n", "line 1"),
        ("t_end = 1\ndt = 2\n", "integrator"),
    ] {
        let cfg = write_cfg(d.path(), "bad.cfg", text);
        let o = run(d.path(), &["--config", &cfg, "simulate"]);
        assert_eq!(code(&o), 1, "{text:?}");
        assert!(stderr(&o).contains(needle), "{text:?}: {}", stderr(&o));
    }
    let o = run(d.path(), &["--config", "/nonexistent.cfg", "simulate"]);
    assert_eq!(code(&o), 1);
    let o = run(
        d.path(),
        &["converge", "--levels", "4,5", "--reference", "6"],
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn numerical_fault_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        d.path(),
        "f.cfg",
        "ic.kind = near_trivial\nic.amplitude = 50\nscheme = crank_nicolson\ndt = 0.5\nt_end = 5\nmesh_level = 5\n",
    );
    let o = run(d.path(), &["--config", &cfg, "simulate"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("positivity"));
    // No monotone steady profile above the existence threshold.
    let o = run(
        d.path(),
        &["--preset", "Fig1s", "steady", "--n-grid", "1024"],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_writes_documented_formats() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), "s.cfg", SMALL);
    let o = run(d.path(), &["--config", &cfg, "--out", "run", "simulate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = d.path().join("run");

    let text = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,l1_u,l1_w,l2_u,l2_w,max_u,argmax_u,spike_count,spike_positions"
    );
    // t = 0 and every 10 steps up to t = 2, plus the snapshot rows that coincide.
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 21);
    for r in &rows {
        assert!(r.ends_with('"'), "{r}");
        let fields: Vec<&str> = r.splitn(9, ',').collect();
        assert_eq!(fields.len(), 9);
        for f in &fields[..7] {
            assert_eq!(
                f.split('e').next().unwrap().len() - f.starts_with('-') as usize,
                18,
                "{f}"
            );
        }
    }
    let mut r = csv::Reader::from_path(out.join("diagnostics.csv")).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        let n: usize = rec[7].parse().unwrap();
        let list = &rec[8];
        let positions: Vec<f64> = if list.is_empty() {
            Vec::new()
        } else {
            list.split(';').map(|x| x.parse().unwrap()).collect()
        };
        assert_eq!(positions.len(), n);
    }

    let snaps: Vec<_> = {
        let mut v: Vec<_> = fs::read_dir(out.join("snapshots"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        v.sort();
        v
    };
    assert_eq!(snaps.len(), 3);
    let s = fs::read_to_string(&snaps[1]).unwrap();
    let mut lines = s.lines();
    assert_eq!(lines.next().unwrap(), "# t=1.0000000000000000e0");
    let nodes: Vec<Vec<f64>> = lines
        .map(|l| l.split(' ').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(nodes.len(), 65);
    assert!(nodes.iter().all(|n| n.len() == 3));
    assert_eq!((nodes[0][0], nodes[64][0]), (0.0, 1.0));

    let echoed = spikepattern::load_config(&out.join("config.txt")).unwrap();
    assert_eq!(echoed, spikepattern::ScenarioConfig::parse(SMALL).unwrap());
    assert!(fs::read_to_string(out.join("report.txt"))
        .unwrap()
        .contains("violations 0"));
}

#[test]
fn output_locations_from_config() {
    let d = tempfile::tempdir().unwrap();
    let text = format!(
        "{SMALL}output.csv = diag/d.csv\noutput.snapshots = snaps\noutput.report = r.txt\n"
    );
    let cfg = write_cfg(d.path(), "s.cfg", &text);
    let o = run(d.path(), &["--config", &cfg, "--out", "o", "simulate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = d.path().join("o");
    assert!(out.join("diag/d.csv").is_file());
    assert!(out.join("snaps/snapshot_0002.txt").is_file());
    assert!(out.join("r.txt").is_file());
}

#[test]
fn simulate_is_byte_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), "s.cfg", SMALL);
    for out in ["a", "b"] {
        let o = run(d.path(), &["--config", &cfg, "--out", out, "simulate"]);
        assert_eq!(code(&o), 0);
    }
    for f in [
        "diagnostics.csv",
        "report.txt",
        "snapshots/snapshot_0002.txt",
    ] {
        assert_eq!(
            fs::read(d.path().join("a").join(f)).unwrap(),
            fs::read(d.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn converge_is_independent_of_thread_count() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        d.path(),
        "c.cfg",
        "mesh_level = 6\ndt = 0.01\nt_end = 2\nsnapshot_times = 1, 2\n",
    );
    for (out, threads) in [("t1", "1"), ("t3", "3")] {
        let o = run(
            d.path(),
            &[
                "--config",
                &cfg,
                "--out",
                out,
                "--threads",
                threads,
                "converge",
                "--levels",
                "4,5,6",
                "--reference",
                "9",
            ],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["convergence_errors.csv", "convergence_orders.csv"] {
        let a = fs::read(d.path().join("t1").join(f)).unwrap();
        assert_eq!(a, fs::read(d.path().join("t3").join(f)).unwrap(), "{f}");
    }
    let mut r = csv::Reader::from_path(d.path().join("t1/convergence_orders.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["h", "t", "order_l2_u", "order_l2_w"]
    );
    for rec in r.records() {
        let order: f64 = rec.unwrap()[2].parse().unwrap();
        assert!((order - 2.0).abs() < 0.3, "{order}");
    }
    let r = csv::Reader::from_path(d.path().join("t1/convergence_errors.csv"))
        .unwrap()
        .headers()
        .unwrap()
        .clone();
    assert_eq!(
        r.iter().collect::<Vec<_>>(),
        ["h", "t", "e_l1_u", "e_l2_u", "e_l1_w", "e_l2_w"]
    );
}

#[test]
fn kinetics_trajectory_approaches_the_steady_state() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        d.path(),
        &[
            "kinetics",
            "--u0",
            "3",
            "--w0",
            "0.3",
            "--t-end",
            "60",
            "--scheme",
            "crank-nicolson",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut r = csv::Reader::from_path(d.path().join("kinetics.csv")).unwrap();
    let last = r.records().last().unwrap().unwrap();
    let (t, u, w): (f64, f64, f64) = (
        last[0].parse().unwrap(),
        last[1].parse().unwrap(),
        last[2].parse().unwrap(),
    );
    assert_eq!(t, 60.0);
    let sq5 = 5f64.sqrt();
    assert!((u - (3.0 + sq5) / 2.0).abs() < 1e-6 && (w - (3.0 - sq5) / 2.0).abs() < 1e-6);
}

#[test]
fn steady_profile_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), "s.cfg", "d_w = 0.05\n");
    let o = run(
        d.path(),
        &[
            "--config",
            &cfg,
            "steady",
            "--modes",
            "2",
            "--decreasing",
            "--n-grid",
            "4096",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("modes 2, first piece decreasing"));
    let s = fs::read_to_string(d.path().join("steady_profile.txt")).unwrap();
    let mut lines = s.lines();
    assert_eq!(lines.next().unwrap(), "# t=inf");
    // Orientation refers to w; u = c / w runs the other way.
    let w: Vec<f64> = lines
        .map(|l| l.split(' ').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(w.len(), 2 * 4096 + 1);
    assert!(w[0] > w[1] && w[4096] < w[4095] && w[8192] > w[8191]);
}

#[test]
fn full_model_config_matches_reduction() {
    let d = tempfile::tempdir().unwrap();
    let full = write_cfg(
        d.path(),
        "full.cfg",
        "full_model = true\na = 4\nd_c = 2\nd_b = 1\nd = 1\nd_g = 2\nalpha = 2\nkappa = 6\ngamma = 0.25\n",
    );
    let kappa1 = format!("{:?}", 6.0 / 2f64.sqrt());
    let reduced = write_cfg(
        d.path(),
        "red.cfg",
        &format!("a1 = 2\nd1 = 1\nkappa1 = {kappa1}\nd_w = 2\n"),
    );
    for (cfg, out) in [(&full, "f"), (&reduced, "r")] {
        let o = run(
            d.path(),
            &["--config", cfg, "--out", out, "analyze", "--k-max", "16"],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = fs::read_to_string(d.path().join("f/dispersion.csv")).unwrap();
    let b = fs::read_to_string(d.path().join("r/dispersion.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn preset_cosxx_is_byte_deterministic() {
    let d = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = run(d.path(), &["--out", out, "preset", "CosXX"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in [
        "diagnostics.csv",
        "growth_orders.csv",
        "fourier.csv",
        "report.txt",
    ] {
        assert_eq!(
            fs::read(d.path().join("a").join(f)).unwrap(),
            fs::read(d.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    let mut r = csv::Reader::from_path(d.path().join("a/growth_orders.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["t", "x", "order"]
    );
    // 40 positive snapshot times, three probes each.
    assert_eq!(r.records().count(), 120);
}

#[test]
fn preset_fig1s_forms_one_spike_near_043() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["preset", "Fig1s"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut r = csv::Reader::from_path(d.path().join("diagnostics.csv")).unwrap();
    let last = r.records().last().unwrap().unwrap();
    assert_eq!(&last[0], "2.5000000000000000e1");
    assert_eq!(&last[7], "1");
    let x: f64 = last[8].parse().unwrap();
    assert!((0.41..=0.45).contains(&x), "{x}");
    assert_eq!(
        fs::read_dir(d.path().join("snapshots")).unwrap().count(),
        26
    );
}

#[test]
fn preset_rejects_config_overrides() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), "s.cfg", SMALL);
    let o = run(d.path(), &["--config", &cfg, "preset", "Fig1s"]);
    assert_eq!(code(&o), 1);
}
