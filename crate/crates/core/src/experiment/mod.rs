//! Monte Carlo phase diagrams, boundary tables, and the file formats the
//! command-line tool reads and writes.

mod config;
mod io;

pub use config::{parse_list, Family, ModelKind, PhaseGridConfig};
pub use io::{fmt_sig, format_gram, parse_gram, parse_vector, read_gram_file, read_vector_file};

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dictionary::{Dictionary, GramMatrix};
use crate::error::Result;
use crate::identifiability::{
    directional_derivative, most_violating_direction, phase_boundary_constant_mu, phase_boundary_general,
    population_verdict, random_tangent_direction, Method, Side, Status, Verdict,
};
use crate::models::{generate_signals, substream_seed, SparsityModel};
use crate::norms::SolverOptions;
use crate::objective::manifold_descent;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmpiricalStatus {
    Recovered,
    NotRecovered,
    Ambiguous,
}

impl std::fmt::Display for EmpiricalStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EmpiricalStatus::Recovered => "recovered",
            EmpiricalStatus::NotRecovered => "not_recovered",
            EmpiricalStatus::Ambiguous => "ambiguous",
        })
    }
}

/// One descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRow {
    pub mu: f64,
    pub sparsity: f64,
    pub batch: usize,
    pub final_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub theory_margin: f64,
    pub theory_status: Status,
}

/// All batches of one `(mu, sparsity)` grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCell {
    pub mu: f64,
    pub sparsity: f64,
    pub batch_errors: Vec<f64>,
    pub theory_margin: f64,
    pub theory_status: Status,
    pub empirical_status: EmpiricalStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagram {
    /// Row order: `mu` outer, `sparsity` middle, `batch` inner.
    pub rows: Vec<PhaseRow>,
    pub cells: Vec<PhaseCell>,
    pub margin_band: f64,
}

impl PhaseDiagram {
    /// `(agreeing, compared)` over cells with `|theory_margin| > margin_band`
    /// and a definite theory verdict. Agreement pairs `Identifiable` with
    /// `Recovered` and `NotIdentifiable` with `NotRecovered`.
    pub fn agreement(&self) -> (usize, usize) {
        let compared: Vec<&PhaseCell> = self
            .cells
            .iter()
            .filter(|c| c.theory_margin.abs() > self.margin_band && c.theory_status != Status::Indeterminate)
            .collect();
        let agree = compared
            .iter()
            .filter(|c| {
                matches!(
                    (c.theory_status, c.empirical_status),
                    (Status::Identifiable, EmpiricalStatus::Recovered) | (Status::NotIdentifiable, EmpiricalStatus::NotRecovered)
                )
            })
            .count();
        (agree, compared.len())
    }

    pub fn agreement_rate(&self) -> f64 {
        let (a, n) = self.agreement();
        if n == 0 {
            f64::NAN
        } else {
            a as f64 / n as f64
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "mu,sparsity,batch,final_error,iterations,converged,theory_margin,theory_status")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                fmt_sig(r.mu),
                fmt_sig(r.sparsity),
                r.batch,
                fmt_sig(r.final_error),
                r.iterations,
                r.converged,
                fmt_sig(r.theory_margin),
                r.theory_status
            )?;
        }
        let (agree, compared) = self.agreement();
        writeln!(
            w,
            "# summary,agreement={},agreeing_cells={agree},compared_cells={compared},total_cells={},margin_band={}",
            fmt_sig(self.agreement_rate()),
            self.cells.len(),
            fmt_sig(self.margin_band)
        )
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn empirical_status(errors: &[f64], low: f64, high: f64) -> EmpiricalStatus {
    let m = median(errors);
    if m < low {
        EmpiricalStatus::Recovered
    } else if m > high {
        EmpiricalStatus::NotRecovered
    } else {
        EmpiricalStatus::Ambiguous
    }
}

/// Runs every `(mu, sparsity, batch)` descent of the sweep in parallel.
/// The output depends only on the config.
pub fn run_phase_grid(cfg: &PhaseGridConfig) -> Result<PhaseDiagram> {
    cfg.validate()?;
    struct Point {
        mu_index: usize,
        sp_index: usize,
        model: SparsityModel,
        d0: Dictionary,
        verdict: Verdict,
    }
    let mut points = Vec::new();
    for (mu_index, &mu) in cfg.mu_values.iter().enumerate() {
        let gram = cfg.family.gram(cfg.k, mu)?;
        let d0 = Dictionary::from_gram(&gram)?;
        for (sp_index, &sv) in cfg.sparsity_values.iter().enumerate() {
            let model = cfg.model_kind.model(sv)?;
            points.push((mu_index, sp_index, model, d0.clone(), gram.clone()));
        }
    }
    let points: Vec<Point> = points
        .into_par_iter()
        .map(|(mu_index, sp_index, model, d0, gram)| {
            let verdict = population_verdict(&gram, model, cfg.method)?;
            Ok(Point { mu_index, sp_index, model, d0, verdict })
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..cfg.batches).map(move |b| (p, b))).collect();
    let rows: Vec<PhaseRow> = jobs
        .into_par_iter()
        .map(|(p, batch)| {
            let pt = &points[p];
            let seed = substream_seed(cfg.seed, &[pt.mu_index as u64, pt.sp_index as u64, batch as u64]);
            let signals = generate_signals(&pt.d0, pt.model, cfg.n, seed)?;
            let trace = manifold_descent(&pt.d0, &signals, &cfg.descent, &pt.d0)?;
            Ok(PhaseRow {
                mu: cfg.mu_values[pt.mu_index],
                sparsity: cfg.sparsity_values[pt.sp_index],
                batch,
                final_error: trace.final_error,
                iterations: trace.iterations,
                converged: trace.converged,
                theory_margin: pt.verdict.margin,
                theory_status: pt.verdict.status,
            })
        })
        .collect::<Result<_>>()?;

    let cells = points
        .iter()
        .enumerate()
        .map(|(p, pt)| {
            let batch_errors: Vec<f64> = rows[p * cfg.batches..(p + 1) * cfg.batches].iter().map(|r| r.final_error).collect();
            PhaseCell {
                mu: cfg.mu_values[pt.mu_index],
                sparsity: cfg.sparsity_values[pt.sp_index],
                empirical_status: empirical_status(&batch_errors, cfg.error_threshold_low, cfg.error_threshold_high),
                batch_errors,
                theory_margin: pt.verdict.margin,
                theory_status: pt.verdict.status,
            }
        })
        .collect();
    Ok(PhaseDiagram { rows, cells, margin_band: cfg.margin_band })
}

/// One row of a boundary table.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRow {
    pub sparsity: f64,
    /// Critical `mu`, or why it could not be found.
    pub critical_mu: std::result::Result<f64, String>,
    pub closed_form: bool,
}

/// Critical `mu` of `family` for each sparsity value. The constant-μ family
/// uses the closed form; other families bisect the verdict margin on `[0, hi)`.
pub fn boundary_table(
    k: usize,
    family: &Family,
    kind: ModelKind,
    sparsity_values: &[f64],
    method: Method,
    tol: f64,
) -> Vec<BoundaryRow> {
    sparsity_values
        .par_iter()
        .map(|&sv| {
            let model = match kind.model(sv).and_then(|m| m.validate(k).map(|_| m)) {
                Ok(m) => m,
                Err(e) => return BoundaryRow { sparsity: sv, critical_mu: Err(e.to_string()), closed_form: false },
            };
            if matches!(family, Family::ConstantMu) {
                let r = phase_boundary_constant_mu(k, model).map_err(|e| e.to_string());
                return BoundaryRow { sparsity: sv, critical_mu: r, closed_form: true };
            }
            let hi = match family {
                Family::GramFile(_) => 1.0,
                _ => 1.0 - 1e-9,
            };
            let r = phase_boundary_general(|t| family.gram(k, t), model, method, (0.0, hi), tol).map_err(|e| e.to_string());
            BoundaryRow { sparsity: sv, critical_mu: r, closed_form: false }
        })
        .collect()
}

pub fn write_boundary_csv<W: Write>(rows: &[BoundaryRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "sparsity,critical_mu,note")?;
    for r in rows {
        match &r.critical_mu {
            Ok(mu) => writeln!(w, "{},{},{}", fmt_sig(r.sparsity), fmt_sig(*mu), if r.closed_form { "closed_form" } else { "bisection" })?,
            Err(e) => writeln!(w, "{},,\"{}\"", fmt_sig(r.sparsity), e.replace('"', "'"))?,
        }
    }
    Ok(())
}

/// Directional-derivative sanity check at `D0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeCheck {
    pub verdict: Verdict,
    pub directions: usize,
    /// `min Δ⁺` over the random tangent directions.
    pub min_plus: f64,
    /// `max Δ⁻` over the random tangent directions.
    pub max_minus: f64,
    /// `Δ⁻` along the worst-column witness direction.
    pub witness_minus: f64,
}

impl DerivativeCheck {
    /// For identifiable verdicts every sampled direction is an ascent
    /// direction on both sides; otherwise the witness direction descends.
    pub fn consistent(&self) -> bool {
        match self.verdict.status {
            Status::Identifiable => self.min_plus > 0.0 && self.max_minus < 0.0,
            Status::NotIdentifiable => self.witness_minus > 0.0 || self.max_minus > 0.0,
            Status::Indeterminate => true,
        }
    }
}

pub fn derivative_check(m0: &GramMatrix, model: SparsityModel, directions: usize, seed: u64) -> Result<DerivativeCheck> {
    let verdict = population_verdict(m0, model, Method::ExactDual)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut min_plus, mut max_minus) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..directions {
        let a = random_tangent_direction(m0, &mut rng);
        min_plus = min_plus.min(directional_derivative(m0, model, &a, Side::Plus)?);
        max_minus = max_minus.max(directional_derivative(m0, model, &a, Side::Minus)?);
    }
    let w = most_violating_direction(m0, model, &SolverOptions::default())?;
    let witness_minus = directional_derivative(m0, model, &w, Side::Minus)?;
    Ok(DerivativeCheck { verdict, directions, min_plus, max_minus, witness_minus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::constant_mu_gram;

    fn tiny(kind: ModelKind, sparsity: Vec<f64>) -> PhaseGridConfig {
        PhaseGridConfig {
            k: 4,
            mu_values: vec![0.05, 0.6],
            sparsity_values: sparsity,
            n: 200,
            batches: 2,
            seed: 3,
            descent: crate::objective::DescentConfig { max_iters: 50, ..Default::default() },
            ..PhaseGridConfig::reference(kind)
        }
    }

    #[test]
    fn grid_shape_and_determinism() {
        let cfg = tiny(ModelKind::SG, vec![1.0, 3.0]);
        let a = run_phase_grid(&cfg).unwrap();
        assert_eq!(a.rows.len(), 2 * 2 * 2);
        assert_eq!(a.cells.len(), 4);
        let b = run_phase_grid(&cfg).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        let csv = a.to_csv_string();
        assert!(csv.starts_with("mu,sparsity,batch,final_error,iterations,converged,theory_margin,theory_status\n"));
        assert!(csv.lines().last().unwrap().starts_with("# summary"));
        // row order: mu outer, sparsity middle, batch inner
        assert_eq!((a.rows[1].mu, a.rows[1].sparsity, a.rows[1].batch), (0.05, 1.0, 1));
        assert_eq!((a.rows[2].mu, a.rows[2].sparsity, a.rows[2].batch), (0.05, 3.0, 0));
    }

    #[test]
    fn single_cell_single_row() {
        let mut cfg = tiny(ModelKind::BG, vec![0.2]);
        cfg.mu_values = vec![0.1];
        cfg.batches = 1;
        let d = run_phase_grid(&cfg).unwrap();
        assert_eq!(d.rows.len(), 1);
        assert_eq!(d.to_csv_string().lines().count(), 3);
    }

    #[test]
    fn status_from_median() {
        assert_eq!(empirical_status(&[0.0, 0.5, 0.001], 1e-2, 1e-1), EmpiricalStatus::Recovered);
        assert_eq!(empirical_status(&[0.2, 0.3], 1e-2, 1e-1), EmpiricalStatus::NotRecovered);
        assert_eq!(empirical_status(&[0.05], 1e-2, 1e-1), EmpiricalStatus::Ambiguous);
    }

    #[test]
    fn boundaries() {
        let rows = boundary_table(10, &Family::ConstantMu, ModelKind::SG, &[4.0, 10.0], Method::ExactDual, 1e-8);
        assert!((rows[0].critical_mu.clone().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(rows[1].critical_mu.is_err());
        let rows = boundary_table(2, &Family::ConstantMu, ModelKind::BG, &[0.3], Method::ExactDual, 1e-8);
        assert!((rows[0].critical_mu.clone().unwrap() - 0.7).abs() < 1e-12);
        let rows = boundary_table(5, &Family::MinimalMu, ModelKind::SG, &[2.0, 1.0], Method::ExactDual, 1e-9);
        assert!((rows[0].critical_mu.clone().unwrap() - 0.75).abs() < 1e-6);
        // SG(1) never crosses on [0, 1)
        assert!(rows[1].critical_mu.is_err());
        let mut buf = Vec::new();
        write_boundary_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("sparsity,critical_mu,note\n"));
    }

    #[test]
    fn derivative_check_agrees_with_verdict() {
        let c = derivative_check(&constant_mu_gram(5, 0.1).unwrap(), SparsityModel::SG(2), 200, 1).unwrap();
        assert_eq!(c.verdict.status, Status::Identifiable);
        assert!(c.consistent());
        let c = derivative_check(&constant_mu_gram(5, 0.5).unwrap(), SparsityModel::SG(3), 50, 1).unwrap();
        assert_eq!(c.verdict.status, Status::NotIdentifiable);
        assert!(c.witness_minus > 0.0 && c.consistent());
    }
}
