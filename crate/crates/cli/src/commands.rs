//! The six subcommands.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde_json::json;
use witten_core::eigen::{count_small_eigenvalues, exponential_rate_fit, lowest_eigenpairs, SpectrumResult};
use witten_core::landscape::{analyze, find_critical_points, harmonic_threshold, validate_box, Landscape};
use witten_core::laplace::{gaussian_sum_direct, gaussian_sum_poisson, laplace_sum_general, GaussianSumSpec, PhaseSpec};
use witten_core::lattice::{assemble_neg_generator, assemble_witten, build_box, LatticeBox};
use witten_core::process::{mean_hitting_time, simulate, SimConfig};
use witten_core::quasimode::{evaluate, QuasimodeConfig};
use witten_core::{Error, SparseOperator};

use crate::config::{ConfigError, Resolved, SCHEMA_VERSION};
use crate::output::{emit_convergence_table, num, RunOutput, SweepReport, SweepRow, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Landscape,
    Spectrum,
    Sweep,
    Quasimode,
    LaplaceCheck,
    Simulate,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Landscape => "landscape",
            Subcommand::Spectrum => "spectrum",
            Subcommand::Sweep => "sweep",
            Subcommand::Quasimode => "quasimode",
            Subcommand::LaplaceCheck => "laplace-check",
            Subcommand::Simulate => "simulate",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            Subcommand::Landscape,
            Subcommand::Spectrum,
            Subcommand::Sweep,
            Subcommand::Quasimode,
            Subcommand::LaplaceCheck,
            Subcommand::Simulate,
        ]
        .into_iter()
        .find(|c| c.name() == s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Module {
        context: String,
        #[source]
        source: Error,
    },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("writing reports: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 0 ok, 2 config error, 3 numerical failure, 4 invariant violation.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Invariant(_) => 4,
            CliError::Module { source, .. } => match source {
                Error::InvalidInput(_) | Error::TooLarge { .. } | Error::ShapeMismatch => 2,
                Error::NoConvergence { .. }
                | Error::NotSeparatedSpectrum { .. }
                | Error::DegenerateFit(_)
                | Error::RadiusTooSmall { .. }
                | Error::RateOverflow { .. }
                | Error::AllCensored(_)
                | Error::InsufficientData(_) => 3,
                Error::NondegeneracyViolation { .. }
                | Error::NotSeparated
                | Error::BoxTooSmall { .. }
                | Error::NoRelevantSaddle { .. }
                | Error::PhasePositivityViolated { .. }
                | Error::ConfigInvalid(_)
                | Error::ComponentAmbiguous { .. } => 4,
            },
        }
    }
}

trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> Context<T> for witten_core::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|source| CliError::Module { context: what(), source })
    }
}

fn header(r: &Resolved) -> serde_json::Value {
    json!({ "schema_version": SCHEMA_VERSION, "config": r.config })
}

fn with_header(r: &Resolved, body: serde_json::Value) -> serde_json::Value {
    let mut v = header(r);
    if let (Some(a), serde_json::Value::Object(b)) = (v.as_object_mut(), body) {
        a.extend(b);
    }
    v
}

fn lattice(r: &Resolved, eps: f64) -> Result<Arc<LatticeBox>, CliError> {
    build_box(r.potential.dim, eps, &r.region.center, &r.region.half_widths)
        .map(Arc::new)
        .context(|| format!("building the box at eps = {eps}"))
}

fn landscape_of(r: &Resolved) -> Result<Landscape, CliError> {
    analyze(&r.potential, &r.region).context(|| format!("analysing '{}'", r.potential.name))
}

fn minima_threshold(r: &Resolved, eps: f64) -> Result<f64, CliError> {
    let cps = find_critical_points(&r.potential, &r.region, 0.05, 1e-10).context(|| "critical point search".into())?;
    let mins = cps.minima();
    if mins.is_empty() {
        return Err(CliError::Invariant("no minimum inside the box".into()));
    }
    Ok(harmonic_threshold(&mins, eps))
}

fn spectrum_at(r: &Resolved, eps: f64, k: usize) -> Result<(SpectrumResult, SparseOperator), CliError> {
    let op = assemble_witten(&r.potential, lattice(r, eps)?).context(|| format!("assembling at eps = {eps}"))?;
    let k = k.min(op.len());
    let s = lowest_eigenpairs(&op, k, r.config.tol, None).context(|| format!("eigensolver at eps = {eps}"))?;
    Ok((s, op))
}

pub fn run_subcommand(cmd: Subcommand, r: &Resolved) -> Result<RunOutput, CliError> {
    match cmd {
        Subcommand::Landscape => landscape(r),
        Subcommand::Spectrum => spectrum(r),
        Subcommand::Sweep => sweep(r),
        Subcommand::Quasimode => quasimode(r),
        Subcommand::LaplaceCheck => laplace_check(r),
        Subcommand::Simulate => simulation(r),
    }
}

fn landscape(r: &Resolved) -> Result<RunOutput, CliError> {
    let land = landscape_of(r)?;
    let eps_min = r.eps_list.iter().copied().fold(f64::INFINITY, f64::min);
    let ek = &land.prediction;
    let check = validate_box(&r.potential, &r.region, ek.h_star, ek.barrier, eps_min, eps_min);
    let d = r.potential.dim;
    let mut head: Vec<String> = vec!["index".into(), "kind".into(), "value".into()];
    head.extend((0..d).map(|i| format!("x{i}")));
    head.extend((0..d).map(|i| format!("hess_eig{i}")));
    let mut t = Table { header: head, rows: Vec::new() };
    for c in &land.critical_points {
        let mut row = vec![c.index.to_string(), if c.is_minimum() { "minimum" } else { "saddle" }.into(), num(c.value)];
        row.extend(c.location.iter().map(|&x| num(x)));
        row.extend(c.hessian_eigenvalues.iter().map(|&x| num(x)));
        t.push(row);
    }
    let json = with_header(
        r,
        json!({
            "potential": r.potential.name,
            "critical_points": land.critical_points,
            "minima": land.minima,
            "h_star": ek.h_star,
            "E": ek.barrier,
            "A": ek.prefactor,
            "saddles": land.saddles,
            "disconnection": land.disconnection,
            "prediction": ek,
            "box_validation": check,
        }),
    );
    Ok(RunOutput {
        name: "landscape",
        json,
        tables: vec![("landscape".into(), t)],
        extra: Vec::new(),
        summary: format!(
            "{} critical points, E = {:.6}, A = {:.6}, box ok: {}",
            land.critical_points.len(),
            ek.barrier,
            ek.prefactor,
            check.ok
        ),
    })
}

fn spectrum(r: &Resolved) -> Result<RunOutput, CliError> {
    let land = landscape_of(r).ok();
    let mut reports = Vec::new();
    let mut t = Table::new(&["eps", "index", "eigenvalue", "residual"]);
    let mut extra = Vec::new();
    for &eps in &r.eps_list {
        let (s, op) = spectrum_at(r, eps, r.config.k)?;
        let threshold = minima_threshold(r, eps)?;
        let gap = count_small_eigenvalues(&s, threshold, land.as_ref().map(|l| &l.prediction))
            .context(|| format!("counting small eigenvalues at eps = {eps}"))?;
        for (i, (l, res)) in s.eigenvalues.iter().zip(&s.residuals).enumerate() {
            t.push(vec![num(eps), (i + 1).to_string(), num(*l), num(*res)]);
        }
        if r.config.dump_operator {
            extra.push((format!("operator_eps_{eps}.txt"), op.dump()));
        }
        reports.push(json!({
            "eps": eps,
            "eigenvalues": s.eigenvalues,
            "residuals": s.residuals,
            "n_small": gap.n_small,
            "threshold": threshold,
            "ratio_to_prediction": gap.ratio_to_prediction,
            "warnings": s.warnings,
        }));
    }
    let summary = format!("{} spectra written", reports.len());
    Ok(RunOutput {
        name: "spectrum",
        json: with_header(r, json!({ "spectra": reports })),
        tables: vec![("spectrum".into(), t)],
        extra,
        summary,
    })
}

/// Rows of the convergence sweep, sorted by decreasing `eps`.
pub fn sweep_report(r: &Resolved) -> Result<SweepReport, CliError> {
    let land = landscape_of(r)?;
    let ek = &land.prediction;
    let cfg = QuasimodeConfig::new(&r.potential, &r.region, &land, r.config.rho).context(|| "quasimode setup".into())?;
    let mut rows = Vec::new();
    for &eps in &r.eps_list {
        let (s, op) = spectrum_at(r, eps, r.config.k.max(3))?;
        let threshold = minima_threshold(r, eps)?;
        let gap = count_small_eigenvalues(&s, threshold, Some(ek)).context(|| format!("counting at eps = {eps}"))?;
        let mins: Vec<_> = land.minima.iter().collect();
        let q = evaluate(&r.potential, &op, &cfg, ek, harmonic_threshold(&mins, eps))
            .context(|| format!("quasimode at eps = {eps}"))?;
        let predicted = ek.gap(eps);
        let l = &s.eigenvalues;
        rows.push(SweepRow {
            eps,
            lambda1: l[0],
            lambda2: l[1],
            lambda3: l[2],
            n_small: gap.n_small,
            ek_e: ek.barrier,
            ek_a: ek.prefactor,
            predicted,
            ratio: l[1] / predicted,
            quasimode_rayleigh: q.rayleigh_quotient,
            lower_bound: q.lower_bound,
        });
    }
    rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    if let Some(bad) = rows.iter().find(|row| !row.ratio.is_finite()) {
        return Err(CliError::Invariant(format!("ratio at eps = {} is not finite", bad.eps)));
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|row| (row.eps, row.lambda2)).collect();
    let (fit, fit_error) = match exponential_rate_fit(&points) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SweepReport { rows, fit, fit_error })
}

fn sweep(r: &Resolved) -> Result<RunOutput, CliError> {
    let report = sweep_report(r)?;
    let mut t = Table::new(&[
        "eps",
        "lambda1",
        "lambda2",
        "lambda3",
        "n_small",
        "ek_E",
        "ek_A",
        "predicted",
        "ratio",
        "quasimode_rayleigh",
        "lower_bound",
    ]);
    for row in &report.rows {
        t.push(vec![
            num(row.eps),
            num(row.lambda1),
            num(row.lambda2),
            num(row.lambda3),
            row.n_small.to_string(),
            num(row.ek_e),
            num(row.ek_a),
            num(row.predicted),
            num(row.ratio),
            num(row.quasimode_rayleigh),
            num(row.lower_bound),
        ]);
    }
    let summary = match &report.fit {
        Some(f) => format!("{} rows, E_fit = {:.4}, A_fit = {:.4}", report.rows.len(), f.e_fit, f.a_fit),
        None => format!("{} rows, no fit", report.rows.len()),
    };
    let json = with_header(r, serde_json::to_value(&report).expect("plain data"));
    let table = emit_convergence_table(&report);
    Ok(RunOutput {
        name: "sweep",
        json,
        tables: vec![("sweep".into(), t)],
        extra: vec![("convergence.csv".into(), table)],
        summary,
    })
}

fn quasimode(r: &Resolved) -> Result<RunOutput, CliError> {
    let land = landscape_of(r)?;
    let cfg = QuasimodeConfig::new(&r.potential, &r.region, &land, r.config.rho).context(|| "quasimode setup".into())?;
    let mins: Vec<_> = land.minima.iter().collect();
    let mut t = Table::new(&[
        "eps",
        "norm_sq_measured",
        "norm_sq_predicted",
        "dirichlet_measured",
        "dirichlet_predicted",
        "residual_sq_measured",
        "residual_scale",
        "rayleigh_quotient",
        "lower_bound",
        "lambda2",
    ]);
    let mut reports = Vec::new();
    for &eps in &r.eps_list {
        let (s, op) = spectrum_at(r, eps, 2)?;
        let q = evaluate(&r.potential, &op, &cfg, &land.prediction, harmonic_threshold(&mins, eps))
            .context(|| format!("quasimode at eps = {eps}"))?;
        let l2 = s.eigenvalues[1];
        if q.ortho_defect > 1e-12 * q.ortho_scale {
            return Err(CliError::Invariant(format!("quasimode not orthogonal to the ground state at eps = {eps}")));
        }
        if !(q.lower_bound <= l2 + 1e-12 && l2 <= q.rayleigh_quotient * (1.0 + 1e-12)) {
            return Err(CliError::Invariant(format!(
                "lower bound {} <= lambda2 {l2} <= Rayleigh quotient {} fails at eps = {eps}",
                q.lower_bound, q.rayleigh_quotient
            )));
        }
        t.push(vec![
            num(eps),
            num(q.norm_sq_measured),
            num(q.norm_sq_predicted),
            num(q.dirichlet_measured),
            num(q.dirichlet_predicted),
            num(q.residual_sq_measured),
            num(q.residual_scale),
            num(q.rayleigh_quotient),
            num(q.lower_bound),
            num(l2),
        ]);
        let mut v = serde_json::to_value(&q).expect("plain data");
        v["lambda2"] = json!(l2);
        reports.push(v);
    }
    let summary = format!("{} quasimode reports, rho = {:.4}", reports.len(), cfg.rho);
    Ok(RunOutput {
        name: "quasimode",
        json: with_header(r, json!({ "reports": reports })),
        tables: vec![("quasimode".into(), t)],
        extra: Vec::new(),
        summary,
    })
}

fn laplace_check(r: &Resolved) -> Result<RunOutput, CliError> {
    let forms: [&[f64]; 4] = [&[1.0], &[3.0], &[1.0, 0.0, 0.0, 4.0], &[2.0, 0.6, 0.6, 1.0]];
    let mut t = Table::new(&["d", "q", "m", "eps", "leading", "direct", "allowance", "gamma", "pass"]);
    let mut rows = Vec::new();
    let mut all = true;
    for q in forms {
        let d = if q.len() == 1 { 1 } else { 2 };
        for m in 0..=2u32 {
            for &eps in &[1.0, 0.5, 0.1, 0.05] {
                let spec = GaussianSumSpec::new(DMatrix::from_row_slice(d, d, q), vec![0.0; d], m, eps).context(|| "Gaussian sum".into())?;
                let p = gaussian_sum_poisson(&spec).context(|| "Poisson leading term".into())?;
                let direct = gaussian_sum_direct(&spec, None).context(|| "direct sum".into())?;
                let allowance = p.correction_bound.max(1e-12 * p.leading);
                let pass = (p.leading - direct).abs() <= allowance;
                all &= pass;
                let qs = q.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
                t.push(vec![d.to_string(), qs, m.to_string(), num(eps), num(p.leading), num(direct), num(allowance), num(p.gamma), pass.to_string()]);
                rows.push(json!({
                    "d": d, "q": q, "m": m, "eps": eps, "leading": p.leading, "direct": direct,
                    "correction_bound": p.correction_bound, "gamma": p.gamma, "pass": pass,
                }));
            }
        }
    }
    let phase = |phi: fn(f64) -> f64, k: u32| PhaseSpec {
        phi: Arc::new(move |x: &[f64]| phi(x[0])),
        x0: vec![0.0],
        delta: 0.5,
        smoothness_k: k,
        hess0: DMatrix::from_element(1, 1, 1.0),
    };
    let mut phases = Vec::new();
    let mut slopes = Vec::new();
    for (k, ph, need) in [
        (3, phase(|x| x * x / 2.0 + x.powi(3) / 10.0, 3), 0.45),
        (4, phase(|x| x * x / 2.0 + x.powi(4) / 10.0, 4), 0.9),
    ] {
        let mut pts = Vec::new();
        for eps in [0.1, 0.05, 0.025] {
            let s = laplace_sum_general(&ph, 0, eps).context(|| format!("general phase k = {k}"))?;
            pts.push((eps, s.rel_error.abs()));
            phases.push(json!({ "k": k, "eps": eps, "value": s.value, "leading": s.leading, "rel_error": s.rel_error }));
        }
        let sl = loglog_slope(&pts);
        all &= sl >= need;
        slopes.push(json!({ "k": k, "slope": sl, "required": need }));
    }
    let n_sums = rows.len();
    let json = with_header(r, json!({ "gaussian_sums": rows, "general_phases": phases, "slopes": slopes, "pass": all }));
    if !all {
        return Err(CliError::Invariant("a lattice sum check failed; see laplace-check.json".into()));
    }
    Ok(RunOutput {
        name: "laplace-check",
        json,
        tables: vec![("laplace-check".into(), t)],
        extra: Vec::new(),
        summary: format!("{n_sums} Gaussian sums and 2 phase sweeps within tolerance"),
    })
}

fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0.ln()).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let num: f64 = points.iter().map(|p| (p.0.ln() - mx) * (p.1.ln() - my)).sum();
    num / points.iter().map(|p| (p.0.ln() - mx).powi(2)).sum::<f64>()
}

fn simulation(r: &Resolved) -> Result<RunOutput, CliError> {
    let opts = &r.config.simulation;
    let (start, target) = match (&opts.start, &opts.target) {
        (Some(s), Some(t)) => (s.clone(), t.clone()),
        _ => {
            let land = landscape_of(r)?;
            (
                opts.start.clone().unwrap_or_else(|| land.minima[0].location.clone()),
                opts.target.clone().unwrap_or_else(|| land.minima[1].location.clone()),
            )
        }
    };
    let n = opts.n_trajectories.unwrap_or(10_000);
    let max_time = opts.max_time.unwrap_or(1e6);
    let mut aggregates = Vec::new();
    let mut tables = Vec::new();
    for &eps in &r.eps_list {
        let mut cfg = SimConfig::between(r.potential.clone(), eps, &start, &target, r.config.seed, max_time, n)
            .context(|| format!("simulation setup at eps = {eps}"))?;
        if let Some(radius) = opts.target_radius {
            cfg.target_radius = radius;
            cfg.validate().context(|| format!("simulation setup at eps = {eps}"))?;
        }
        let records = simulate(&cfg).context(|| format!("simulation at eps = {eps}"))?;
        let stats = mean_hitting_time(&records).context(|| format!("hitting statistics at eps = {eps}"))?;
        let gen = assemble_neg_generator(&r.potential, lattice(r, eps)?).context(|| "generator".into())?;
        let l2 = lowest_eigenpairs(&gen, 2, r.config.tol, None).context(|| "generator spectrum".into())?.eigenvalues[1] / eps;
        let mut t = Table::new(&["seed", "traj_index", "hit", "time", "steps"]);
        for rec in &records {
            t.push(vec![rec.seed.to_string(), rec.traj_index.to_string(), rec.hit.to_string(), num(rec.time), rec.steps.to_string()]);
        }
        let stem = if r.eps_list.len() == 1 { "simulate".to_string() } else { format!("simulate_eps_{eps}") };
        tables.push((stem, t));
        aggregates.push(json!({
            "eps": eps,
            "n": records.len(),
            "mean": stats.mean,
            "stderr": stats.stderr,
            "censored": stats.n_censored,
            "lambda2_ref": l2,
            "product": stats.mean * l2,
            "median": stats.median,
            "exponentiality": stats.exponentiality,
            "start": cfg.start_point(),
            "target_center": cfg.target_center,
            "target_radius": cfg.target_radius,
        }));
    }
    let summary = aggregates
        .iter()
        .map(|a| format!("eps {}: mean {:.4}, product {:.4}", a["eps"], a["mean"].as_f64().unwrap_or(f64::NAN), a["product"].as_f64().unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(RunOutput {
        name: "simulate",
        json: with_header(r, json!({ "aggregates": aggregates })),
        tables,
        extra: Vec::new(),
        summary,
    })
}

