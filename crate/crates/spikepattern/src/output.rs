//! File formats. Every float is written with 17 significant digits so that repeated runs
//! can be compared byte for byte.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use spikepattern_core::convergence::ConvergenceStudy;
use spikepattern_core::diagnostics::{MassBoundReport, RunDiagnostics};
use spikepattern_core::grid::Field;
use spikepattern_core::integrator::State;
use spikepattern_core::kinetics::KineticSample;
use spikepattern_core::stability::DdiReport;
use spikepattern_core::steady_bvp::{Orientation, SteadyProfile};

/// Output failure, with the path that was being written.
#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct OutputError {
    /// File or directory.
    pub path: PathBuf,
    /// Underlying error.
    pub source: io::Error,
}

impl OutputError {
    fn at(path: &Path) -> impl FnOnce(io::Error) -> Self + '_ {
        move |source| Self {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<(PathBuf, csv::Error)> for OutputError {
    fn from((path, e): (PathBuf, csv::Error)) -> Self {
        Self {
            path,
            source: e.into(),
        }
    }
}

/// `v` in scientific notation with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>, OutputError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(OutputError::at(dir))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(OutputError::at(path))
}

/// Writes text to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(OutputError::at(path))
}

/// Writes CSV records; the first record is the header.
pub fn write_csv<I, R>(path: &Path, records: I) -> Result<(), OutputError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in records {
        w.write_record(r).map_err(|e| (path.to_path_buf(), e))?;
    }
    w.flush().map_err(OutputError::at(path))
}

/// Snapshot text: `# t=<t>` then one `x u w` line per node.
pub fn snapshot_text(t: &str, u: &Field, w: &Field) -> String {
    let mesh = u.mesh();
    let mut s = String::with_capacity(80 * mesh.n_nodes());
    let _ = writeln!(s, "# t={t}");
    for (i, (a, b)) in u.values().iter().zip(w.values()).enumerate() {
        let _ = writeln!(
            s,
            "{} {} {}",
            fmt_real(mesh.x(i)),
            fmt_real(*a),
            fmt_real(*b)
        );
    }
    s
}

/// Writes `snapshot_NNNN.txt` files into `dir`, numbered in time order.
pub fn write_snapshots(dir: &Path, snapshots: &[State]) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(OutputError::at(dir))?;
    for (i, s) in snapshots.iter().enumerate() {
        let path = dir.join(format!("snapshot_{i:04}.txt"));
        write_text(&path, &snapshot_text(&fmt_real(s.t), &s.u, &s.w))?;
    }
    Ok(())
}

/// A steady profile in snapshot format, with time `inf`.
pub fn write_steady_profile(path: &Path, p: &SteadyProfile) -> Result<(), OutputError> {
    write_text(path, &snapshot_text("inf", &p.u, &p.w))
}

/// CSV whose last column is a list; that column is always quoted, so an empty or
/// single-entry list reads the same way as a longer one. The other fields must not need
/// quoting.
pub fn write_list_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = (Vec<String>, String)>,
) -> Result<(), OutputError> {
    let mut s = header.join(",");
    s.push('\n');
    for (fields, list) in rows {
        for f in &fields {
            debug_assert!(!f.contains([',', '"', '\n']));
            s.push_str(f);
            s.push(',');
        }
        s.push('"');
        s.push_str(&list.replace('"', "\"\""));
        s.push_str("\"\n");
    }
    write_text(path, &s)
}

/// Diagnostics CSV; the spike list is semicolon-joined.
pub fn write_diagnostics(path: &Path, d: &RunDiagnostics) -> Result<(), OutputError> {
    let header = [
        "t",
        "l1_u",
        "l1_w",
        "l2_u",
        "l2_w",
        "max_u",
        "argmax_u",
        "spike_count",
        "spike_positions",
    ];
    let rows = d.rows.iter().map(|r| {
        (
            vec![
                fmt_real(r.t),
                fmt_real(r.l1_u),
                fmt_real(r.l1_w),
                fmt_real(r.l2_u),
                fmt_real(r.l2_w),
                fmt_real(r.max_u),
                fmt_real(r.argmax_u),
                r.spike_count.to_string(),
            ],
            join_positions(&r.spike_positions),
        )
    });
    write_list_csv(path, &header, rows)
}

/// Positions joined by `;`.
pub fn join_positions(xs: &[f64]) -> String {
    xs.iter()
        .map(|&x| fmt_real(x))
        .collect::<Vec<_>>()
        .join(";")
}

/// Kinetic trajectory CSV `t,u,w`.
pub fn write_kinetics(path: &Path, samples: &[KineticSample]) -> Result<(), OutputError> {
    let header = vec!["t".to_string(), "u".into(), "w".into()];
    let rows = samples
        .iter()
        .map(|s| vec![fmt_real(s.t), fmt_real(s.u), fmt_real(s.w)]);
    write_csv(path, std::iter::once(header).chain(rows))
}

/// Dispersion CSV `k,q,re_lambda_plus,im_lambda_plus,re_lambda_minus,im_lambda_minus`.
pub fn write_dispersion(path: &Path, r: &DdiReport) -> Result<(), OutputError> {
    let header = [
        "k",
        "q",
        "re_lambda_plus",
        "im_lambda_plus",
        "re_lambda_minus",
        "im_lambda_minus",
    ]
    .map(String::from)
    .to_vec();
    let rows = r.dispersion.iter().map(|d| {
        vec![
            d.k.to_string(),
            fmt_real(d.q),
            fmt_real(d.lambda_plus.re),
            fmt_real(d.lambda_plus.im),
            fmt_real(d.lambda_minus.re),
            fmt_real(d.lambda_minus.im),
        ]
    });
    write_csv(path, std::iter::once(header).chain(rows))
}

/// Error CSV `h,t,e_l1_u,e_l2_u,e_l1_w,e_l2_w` and order CSV `h,t,order_l2_u,order_l2_w`.
/// Orders that are undefined (error below the floor) are left empty.
pub fn write_study(
    errors_path: &Path,
    orders_path: &Path,
    s: &ConvergenceStudy,
) -> Result<(), OutputError> {
    let header = ["h", "t", "e_l1_u", "e_l2_u", "e_l1_w", "e_l2_w"]
        .map(String::from)
        .to_vec();
    let rows = s.errors.iter().map(|e| {
        vec![
            fmt_real(e.h),
            fmt_real(e.t),
            fmt_real(e.e_l1_u),
            fmt_real(e.e_l2_u),
            fmt_real(e.e_l1_w),
            fmt_real(e.e_l2_w),
        ]
    });
    write_csv(errors_path, std::iter::once(header).chain(rows))?;
    let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
    let header = ["h", "t", "order_l2_u", "order_l2_w"]
        .map(String::from)
        .to_vec();
    let rows = s.orders.iter().map(|o| {
        vec![
            fmt_real(o.h),
            fmt_real(o.t),
            opt(o.order_l2_u),
            opt(o.order_l2_w),
        ]
    });
    write_csv(orders_path, std::iter::once(header).chain(rows))
}

/// Text form of a stability analysis.
pub fn ddi_report_text(r: &DdiReport) -> String {
    let k = r.params.kinetics;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "parameters: a1 = {}, d1 = {}, kappa1 = {}, D_w = {}",
        fmt_real(k.a1()),
        fmt_real(k.d1()),
        fmt_real(k.kappa1()),
        fmt_real(r.params.d_w())
    );
    let Some(st) = r.steady_state else {
        let _ = writeln!(
            s,
            "positive steady states: none (kappa1^2 < 4 d1 / (a1 - d1)); only the trivial state (0, kappa1)"
        );
        return s;
    };
    let _ = writeln!(s, "positive steady states: yes");
    let _ = writeln!(
        s,
        "minus branch: u = {}, w = {}",
        fmt_real(st.u_bar),
        fmt_real(st.w_bar)
    );
    if let Some(ks) = r.kinetic_stability {
        let _ = writeln!(s, "kinetic stability: {ks:?}");
    }
    if let Some(l) = r.lambda_limit {
        let _ = writeln!(s, "lambda_+ limit as k -> infinity: {}", fmt_real(l));
    }
    let _ = writeln!(s, "modes scanned: 0..={}", r.k_max);
    let modes = r
        .unstable_modes
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(" ");
    let _ = writeln!(s, "unstable modes: {modes}");
    match r.first_unstable_mode {
        Some(k) => {
            let _ = writeln!(s, "first unstable mode: {k}");
        }
        None => {
            let _ = writeln!(s, "first unstable mode: none");
        }
    }
    let _ = writeln!(s, "diffusion-driven instability: {}", r.ddi);
    let _ = writeln!(
        s,
        "critical diffusion D_w,k (tabulated |A|/(a11 k^2), Neumann |A|/(a11 pi^2 k^2)):"
    );
    for c in &r.d_w_thresholds {
        let _ = writeln!(
            s,
            "  k = {}: {} {}",
            c.k,
            fmt_real(c.tabulated),
            fmt_real(c.neumann)
        );
    }
    s
}

/// Text summary of a simulation.
pub fn run_report_text(
    header: &str,
    d: &RunDiagnostics,
    steps: usize,
    mass: &MassBoundReport,
) -> String {
    let mut s = String::from(header);
    let _ = writeln!(s, "steps: {steps}");
    if let Some(r) = d.last() {
        let _ = writeln!(s, "final time: {}", fmt_real(r.t));
        let _ = writeln!(
            s,
            "final max u: {} at x = {}",
            fmt_real(r.max_u),
            fmt_real(r.argmax_u)
        );
        let _ = writeln!(s, "final spike count: {}", r.spike_count);
        let _ = writeln!(
            s,
            "final spike positions: {}",
            join_positions(&r.spike_positions)
        );
    }
    let _ = writeln!(
        s,
        "mass bounds over {} trailing rows: max l1_u {} (bound {}), max l1_w {} (bound {}), max l1_u/a1 + l1_w {} (bound {}), violations {}",
        mass.rows_checked,
        fmt_real(mass.max_l1_u),
        fmt_real(mass.u_bound),
        fmt_real(mass.max_l1_w),
        fmt_real(mass.w_bound),
        fmt_real(mass.max_combined),
        fmt_real(mass.combined_bound),
        mass.violations.len()
    );
    s
}

/// One-line description of a steady profile.
pub fn steady_summary(p: &SteadyProfile) -> String {
    let o = match p.orientation {
        Orientation::Increasing => "increasing",
        Orientation::Decreasing => "decreasing",
    };
    let (_, wmax) = p.w.argmax();
    let (_, umax) = p.u.argmax();
    format!(
        "modes {}, first piece {o}, D_w {}, max w {}, max u {}",
        p.modes,
        fmt_real(p.d_w),
        fmt_real(wmax),
        fmt_real(umax)
    )
}
