//! Command execution: dispatch, gates, and artifact writing.
//!
//! Every artifact is written to a temporary file in the output directory
//! and renamed into place. `summary.json` is written for every run that gets
//! past validation, failing runs included.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::appendix::verify_appendix;
use crate::boundary_layer::{assemble_with_profile, bl_profile, default_rho_max, wall_derivative_check};
use crate::channel::{base_flow, mode_rhs, ChannelParams};
use crate::config::{Command, Format, RunSpec};
use crate::error::{LabError, Result};
use crate::linear::solve_clamped;
use crate::nonlinear::{
    checkpoint_json, grid_for, picard_iterate, probe_field, uniqueness_probe, ForcingField, IterationReport, ModeSolvers,
};
use crate::scaling::{solve_mode, sweep, SlopeCheck, SweepOutcome, SweepSpec};
use crate::spectral::{Grid, ModeProfile};

pub const SUMMARY_FORMAT: &str = "poiseuille-lab-summary";
pub const SUMMARY_VERSION: u32 = 1;
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "POISEUILLE_LAB_OUT";

/// Decomposition versus direct clamped solve, relative max-norm.
pub const DECOMPOSITION_GATE: f64 = 1e-6;
/// Defining-relation residual of the wall-layer profile.
pub const PROFILE_RELATION_GATE: f64 = 1e-9;
/// Quadratic-term residual of a converged nonlinear solve.
pub const NS_RESIDUAL_GATE: f64 = 1e-8;
/// Final `‖v‖_{H¹}` of the uniqueness probe.
pub const UNIQUENESS_GATE: f64 = 1e-10;
const PROFILE_POINTS: usize = 401;

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    pub summary: Option<Value>,
    pub error: Option<String>,
}

/// Resolves the output directory: explicit flag, then the document, then
/// the environment, then `./out`.
pub fn output_dir(flag: Option<&Path>, spec: &RunSpec) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| spec.output.dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, &path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        LabError::io(&path, e)
    })
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    fn put(&mut self, name: String, contents: &str) -> Result<()> {
        write_atomic(&self.dir, &name, contents)?;
        self.written.push(name);
        Ok(())
    }

    fn json(&mut self, name: &str, v: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(v).expect("serializable") + "\n";
        self.put(name.to_string(), &text)
    }
}

/// What a command produced: its detail record and whether its gates held.
struct Verdict {
    pass: bool,
    details: Value,
}

/// Runs a validated spec, writing into `dir`. Exit codes: 0 when every gate
/// holds, 1 for invalid input or I/O failure (nothing is written), 2 for
/// numerical failures and failed gates.
pub fn run(spec: &RunSpec, dir: &Path) -> RunOutcome {
    let fail = |code, e: LabError| RunOutcome {
        exit_code: code,
        outputs: Vec::new(),
        summary: None,
        error: Some(e.to_string()),
    };
    if let Err(e) = spec.validate() {
        return fail(1, e);
    }
    if let Err(e) = fs::create_dir_all(dir) {
        return fail(1, LabError::io(dir, e));
    }
    let mut art = Artifacts {
        dir: dir.to_path_buf(),
        written: Vec::new(),
    };
    let result = dispatch(spec, &mut art);
    let (exit_code, status, error, details) = match result {
        Ok(v) if v.pass => (0, "pass", None, v.details),
        Ok(v) => (2, "fail", None, v.details),
        Err(e @ LabError::Io { .. }) => return fail(1, e),
        Err(e) if e.is_validation() => return fail(1, e),
        Err(e) => (2, "error", Some(e.to_string()), Value::Null),
    };
    let mut recorded = spec.clone();
    recorded.output.dir = None;
    let mut outputs = art.written.clone();
    outputs.push("summary.json".into());
    let summary = json!({
        "format": SUMMARY_FORMAT,
        "version": SUMMARY_VERSION,
        "command": spec.command.name(),
        "status": status,
        "exit_code": exit_code,
        "error": error,
        "outputs": outputs,
        "spec": recorded,
        "details": details,
    });
    if let Err(e) = art.json("summary.json", &summary) {
        return fail(1, e);
    }
    RunOutcome {
        exit_code,
        outputs: art.written,
        summary: Some(summary),
        error,
    }
}

fn dispatch(spec: &RunSpec, art: &mut Artifacts) -> Result<Verdict> {
    match spec.command {
        Command::SolveLinear => solve_linear(spec, art),
        Command::Decompose => decompose(spec, art),
        Command::Sweep => run_sweep(spec, art),
        Command::VerifyLemmas => verify_lemmas(spec, art),
        Command::SolveNonlinear => solve_nonlinear(spec, art),
        Command::ProbeUniqueness => probe_uniqueness(spec, art),
        Command::BlProfile => profile(spec, art),
    }
}

fn points(spec: &RunSpec) -> Vec<(f64, f64, i64)> {
    let mut v = Vec::new();
    for &phi in &spec.params.phi {
        for &l in &spec.params.l {
            for &n in &spec.params.n {
                v.push((phi, l, n));
            }
        }
    }
    v
}

fn tag(phi: f64, l: f64, n: i64) -> String {
    format!("phi{phi:e}_L{l:e}_n{n}")
}

/// Tab-separated samples of complex profiles on their common grid.
fn profile_table(names: &[&str], cols: &[&ModeProfile]) -> String {
    let mut s = String::from("y");
    for n in names {
        let _ = write!(s, "\tre_{n}\tim_{n}");
    }
    s.push('\n');
    let grid = cols[0].grid();
    for (j, y) in grid.nodes().iter().enumerate() {
        let _ = write!(s, "{y:e}");
        for c in cols {
            let v = c.samples()[j];
            let _ = write!(s, "\t{:e}\t{:e}", v.re, v.im);
        }
        s.push('\n');
    }
    s
}

fn grid_override(spec: &RunSpec) -> Result<Option<Arc<Grid>>> {
    spec.solver.nodes.map(Grid::shared).transpose()
}

fn solve_linear(spec: &RunSpec, art: &mut Artifacts) -> Result<Verdict> {
    let forcings = spec.forcing_profiles()?;
    let mut out = SweepOutcome {
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    let mut errors = Vec::new();
    for (phi, l, n) in points(spec) {
        let params = ChannelParams::new(phi, l, n)?;
        for f in &forcings {
            match solve_mode(spec.solver.kind, &params, f) {
                Ok(sol) => {
                    if spec.output.wants(Format::ProfileTables) {
                        let d1 = sol.psi.derivative_unchecked(1);
                        let table = profile_table(&["psi", "psi_d1", "omega"], &[&sol.psi, &d1, &sol.omega]);
                        art.put(format!("profile_{}_{}.tsv", tag(phi, l, n), f.id), &table)?;
                    }
                    out.rows.push(sol.row);
                }
                Err(e) => errors.push(json!({"phi": phi, "L": l, "n": n, "forcing_id": f.id, "error": e.to_string()})),
            }
        }
    }
    if spec.output.wants(Format::Csv) {
        art.put("solve_linear.csv".into(), &out.to_csv())?;
    }
    Ok(Verdict {
        pass: errors.is_empty(),
        details: json!({"solver": spec.solver.kind, "rows": out.rows, "errors": errors}),
    })
}

#[derive(Serialize)]
struct DecompositionRecord {
    phi: f64,
    #[serde(rename = "L")]
    l: f64,
    n: i64,
    forcing_id: String,
    nodes: usize,
    a_even: [f64; 2],
    a_odd: [f64; 2],
    b_even: [f64; 2],
    b_odd: [f64; 2],
    /// `(|b_e| + |b_o|)|Φn̂|^{3/4} / ((1+L)^{5/6}(∫|F|²)^{1/2})`.
    b_ratio: f64,
    /// Relative max-norm difference from the direct clamped solve.
    clamped_difference: f64,
    diagnostics: crate::boundary_layer::DecompositionDiagnostics,
    pass: bool,
}

fn decompose(spec: &RunSpec, art: &mut Artifacts) -> Result<Verdict> {
    let forcings = spec.forcing_profiles()?;
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (phi, l, n) in points(spec) {
        let params = ChannelParams::new(phi, l, n)?;
        for f in &forcings {
            let one = || -> Result<(DecompositionRecord, String)> {
                let rho_max = spec.solver.rho_max.unwrap_or_else(|| default_rho_max(params.beta()));
                let profile = bl_profile(&params, rho_max)?;
                let grid = Grid::shared(crate::spectral::resolution_for_beta(params.beta()))?;
                let base = base_flow(phi, &grid)?;
                let fm = f.on_grid(&grid, params.nhat);
                let d = assemble_with_profile(&params, &base, &fm, &profile)?;
                let direct = solve_clamped(&params, &base, &grid, &mode_rhs(&fm))?;
                let diff = d.total.max_diff(&direct.psi) / direct.psi.max_abs().max(f64::MIN_POSITIVE);
                let fsq = fm.f1.norm_sq() + fm.f2.norm_sq();
                let b = d.b_e.norm() + d.b_o.norm();
                let b_ratio = b * (phi * params.nhat).abs().powf(0.75) / ((1.0 + l).powf(5.0 / 6.0) * fsq.sqrt());
                let pair = |c: crate::spectral::C64| [c.re, c.im];
                let pass = diff < DECOMPOSITION_GATE;
                let table = profile_table(
                    &["total", "slip", "layer_even", "layer_odd", "clamped"],
                    &[&d.total, &d.psi_s, &d.psi_bl_e, &d.psi_bl_o, &direct.psi],
                );
                Ok((
                    DecompositionRecord {
                        phi,
                        l,
                        n,
                        forcing_id: f.id.clone(),
                        nodes: grid.n(),
                        a_even: pair(d.a_e),
                        a_odd: pair(d.a_o),
                        b_even: pair(d.b_e),
                        b_odd: pair(d.b_o),
                        b_ratio,
                        clamped_difference: diff,
                        diagnostics: d.diagnostics,
                        pass,
                    },
                    table,
                ))
            };
            match one() {
                Ok((rec, table)) => {
                    if spec.output.wants(Format::ProfileTables) {
                        art.put(format!("decomposition_{}_{}.tsv", tag(phi, l, n), f.id), &table)?;
                    }
                    records.push(rec);
                }
                Err(e) => errors.push(json!({"phi": phi, "L": l, "n": n, "forcing_id": f.id, "error": e.to_string()})),
            }
        }
    }
    if spec.output.wants(Format::Csv) {
        let mut s = String::from("phi,L,n,forcing_id,nodes,abs_a_even,abs_a_odd,abs_b_even,abs_b_odd,b_ratio,clamped_difference,wall_ratio,bc_defect\n");
        for r in &records {
            let abs = |p: [f64; 2]| p[0].hypot(p[1]);
            let _ = writeln!(
                s,
                "{:e},{:e},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.phi,
                r.l,
                r.n,
                r.forcing_id,
                r.nodes,
                abs(r.a_even),
                abs(r.a_odd),
                abs(r.b_even),
                abs(r.b_odd),
                r.b_ratio,
                r.clamped_difference,
                r.diagnostics.wall_ratio,
                r.diagnostics.bc_defect
            );
        }
        art.put("decomposition.csv".into(), &s)?;
    }
    let pass = errors.is_empty() && records.iter().all(|r| r.pass);
    Ok(Verdict {
        pass,
        details: json!({"gate": DECOMPOSITION_GATE, "records": records, "errors": errors}),
    })
}

fn run_sweep(spec: &RunSpec, art: &mut Artifacts) -> Result<Verdict> {
    let sweep_spec = SweepSpec {
        phis: spec.params.phi.clone(),
        ls: spec.params.l.clone(),
        ns: spec.params.n.clone(),
        forcings: spec.forcing_profiles()?,
        solver: spec.solver.kind,
        thresholds: spec.thresholds,
    };
    let out = sweep(&sweep_spec)?;
    let summary = out.summary(spec.solver.kind, &SlopeCheck::defaults(), spec.sweep.sanity_factor);
    if spec.output.wants(Format::Csv) {
        art.put("sweep.csv".into(), &out.to_csv())?;
    }
    if spec.output.wants(Format::Json) {
        art.json("sweep_rows.json", &out.rows)?;
    }
    Ok(Verdict {
        pass: summary.pass,
        details: serde_json::to_value(&summary).expect("serializable"),
    })
}

fn verify_lemmas(spec: &RunSpec, art: &mut Artifacts) -> Result<Verdict> {
    let out = verify_appendix(&spec.appendix_spec())?;
    if spec.output.wants(Format::Csv) {
        let mut s = String::from("lemma_id,trials,violations,worst_margin,empirical_constant\n");
        for r in &out.reports {
            let c = r.empirical_constant.map(|c| format!("{c:e}")).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{:e},{}", r.lemma_id, r.trials, r.violations, r.worst_margin, c);
        }
        art.put("lemmas.csv".into(), &s)?;
    }
    if spec.output.wants(Format::Json) {
        art.json("lemmas.json", &out)?;
    }
    Ok(Verdict {
        pass: out.explicit_pass(),
        details: serde_json::to_value(&out).expect("serializable"),
    })
}

fn single(spec: &RunSpec) -> Result<(f64, f64)> {
    match (spec.params.phi.as_slice(), spec.params.l.as_slice()) {
        ([phi], [l]) => Ok((*phi, *l)),
        _ => Err(LabError::param("params", "this command takes a single phi and a single L")),
    }
}

fn trace_text(report: &IterationReport) -> String {
    let mut s = String::from("# iteration step_norm h1\n");
    for (k, h) in report.h1_trace.iter().enumerate() {
        let step = match k {
            0 => "-".to_string(),
            _ => format!("{:e}", report.step_norms[k - 1]),
        };
        let _ = writeln!(s, "{k} {step} {h:e}");
    }
    s
}

fn solve_nonlinear(spec: &RunSpec, art: &mut Artifacts) -> Result<Verdict> {
    let (phi, l) = single(spec)?;
    let nx = spec.solver.nx;
    let grid = match grid_override(spec)? {
        Some(g) => g,
        None => grid_for(phi, l, nx)?,
    };
    let forcing = ForcingField::random(l, nx, spec.forcing.active, &grid, spec.forcing.norm, spec.solver.seed)?;
    let solvers = ModeSolvers::new(phi, l, nx, &grid)?;
    let (v, report) = picard_iterate(&forcing, &solvers, &spec.solver.picard(), None)?;
    art.put("trace.txt".into(), &trace_text(&report))?;
    if spec.output.wants(Format::Json) {
        art.put("checkpoint.json".into(), &checkpoint_json(&v, phi))?;
    }
    let pass = report.converged && report.final_residual < NS_RESIDUAL_GATE;
    Ok(Verdict {
        pass,
        details: json!({
            "phi": phi,
            "L": l,
            "nx": nx,
            "nodes": grid.n(),
            "forcing_l2": forcing.l2(),
            "tail_contraction": report.tail_contraction(),
            "residual_gate": NS_RESIDUAL_GATE,
            "report": report,
        }),
    })
}

fn probe_uniqueness(spec: &RunSpec, art: &mut Artifacts) -> Result<Verdict> {
    let (phi, l) = single(spec)?;
    let nx = spec.solver.nx;
    let grid = match grid_override(spec)? {
        Some(g) => g,
        None => grid_for(phi, l, nx)?,
    };
    let target = spec.probe.amplitude * phi.powf(1.0 / 90.0);
    let v0 = probe_field(l, nx, spec.probe.active, &grid, target)?;
    let solvers = ModeSolvers::new(phi, l, nx, &grid)?;
    let report = uniqueness_probe(&solvers, &v0, &spec.solver.picard())?;
    art.put("trace.txt".into(), &trace_text(&report))?;
    let pass = report.h1 < UNIQUENESS_GATE;
    Ok(Verdict {
        pass,
        details: json!({
            "phi": phi,
            "L": l,
            "nx": nx,
            "nodes": grid.n(),
            "initial_v2_h1": v0.v2_h1(),
            "initial_v1_h1": v0.v1_h1(),
            "initial_h1": v0.h1(),
            "gate": UNIQUENESS_GATE,
            "report": report,
        }),
    })
}

fn profile(spec: &RunSpec, art: &mut Artifacts) -> Result<Verdict> {
    let mut records = Vec::new();
    let mut pass = true;
    for (phi, l, n) in points(spec) {
        let params = ChannelParams::new(phi, l, n)?;
        let rho_max = spec.solver.rho_max.unwrap_or_else(|| default_rho_max(params.beta()));
        let p = bl_profile(&params, rho_max)?;
        let relation = p.relation_residual(128, 16.0)?;
        pass &= relation < PROFILE_RELATION_GATE;
        if spec.output.wants(Format::ProfileTables) {
            art.put(format!("bl_profile_{}.tsv", tag(phi, l, n)), &p.table(PROFILE_POINTS, 20.0)?)?;
        }
        let pair = |c: crate::spectral::C64| [c.re, c.im];
        records.push(json!({
            "phi": phi,
            "L": l,
            "n": n,
            "beta": p.beta,
            "rho_max": p.rho_max,
            "c0": pair(p.c0),
            "g_wall": pair(p.g_wall),
            "g_wall_prime": pair(p.g_wall_prime),
            "wall_derivative": pair(p.wall_derivative()),
            "wall_ratio": wall_derivative_check(&p),
            "decay_bound": p.decay_bound,
            "relation_residual": relation,
        }));
    }
    Ok(Verdict {
        pass,
        details: json!({"gate": PROFILE_RELATION_GATE, "profiles": records}),
    })
}
