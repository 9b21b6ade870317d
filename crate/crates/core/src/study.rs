//! Convergence studies: refinement sequences, experimental orders of
//! convergence against `D_h`, and the CSV table format.

use std::io::{BufRead, Write};

use crate::adapt::{adaptive_loop, MarkParams};
use crate::dpg::{assemble_solve, count_dofs, estimator, DpgOptions, ScalarField, TrialSpaceKind};
use crate::error::{Error, Result};
use crate::linalg::SolverOptions;
use crate::mesh::Mesh;
use crate::postprocess::postprocess_all;
use crate::problems::{error_quadrature_degree, error_report, ManufacturedProblem};
use crate::spaces::quadrature::MAX_DEGREE;

pub const CSV_HEADER: &str = "level,dofs,h_max,err_u,err_sigma,err_u_post,eta,eoc_u,eoc_sigma,eoc_post,eoc_eta";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemChoice {
    Square,
    LShape,
}

impl ProblemChoice {
    pub fn problem(&self) -> ManufacturedProblem {
        match self {
            ProblemChoice::Square => ManufacturedProblem::square_smooth(),
            ProblemChoice::LShape => ManufacturedProblem::lshape_singular(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialChoice {
    Standard,
    Augmented,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Uniform,
    Adaptive,
}

#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub problem: ProblemChoice,
    pub p: usize,
    pub trial: TrialChoice,
    pub mode: Mode,
    pub theta: f64,
    /// Maximal number of levels (solves).
    pub levels: usize,
    /// Levels whose `D_h` would exceed this are not solved.
    pub max_dofs: usize,
    pub postprocess: bool,
    pub solver_tol: f64,
    pub quad_bump: usize,
    pub enrichment: usize,
    /// Use the rayon pool for elementwise work. Output is identical either way.
    pub parallel: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            problem: ProblemChoice::Square,
            p: 0,
            trial: TrialChoice::Standard,
            mode: Mode::Uniform,
            theta: 0.25,
            levels: 5,
            max_dofs: 1_000_000,
            postprocess: false,
            solver_tol: 1e-10,
            quad_bump: 0,
            enrichment: 2,
            parallel: true,
        }
    }
}

impl StudyConfig {
    pub fn trial_space(&self) -> TrialSpaceKind {
        match self.trial {
            TrialChoice::Standard => TrialSpaceKind::Standard(self.p),
            TrialChoice::Augmented => TrialSpaceKind::Augmented(self.p),
        }
    }

    pub fn dpg_options(&self) -> DpgOptions {
        DpgOptions {
            enrichment: self.enrichment,
            quad_bump: self.quad_bump,
            solver: SolverOptions { rel_tol: self.solver_tol, ..Default::default() },
            parallel: self.parallel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.levels == 0 {
            return bad("at least one level is required".into());
        }
        if self.max_dofs == 0 {
            return bad("max-dofs must be positive".into());
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) {
            return bad(format!("solver tolerance must lie in (0, 1), got {}", self.solver_tol));
        }
        if self.mode == Mode::Adaptive {
            MarkParams::new(self.theta)?;
        }
        let test_degree = self.p + self.enrichment;
        if test_degree < self.trial_space().field_degree() + 1 {
            return bad(format!("enrichment {} is too small for this trial space", self.enrichment));
        }
        let needed = error_quadrature_degree(self.p, self.quad_bump).max(2 * (test_degree + 1) + self.quad_bump);
        if needed > MAX_DEGREE {
            return bad(format!("p = {} needs quadrature degree {needed}, at most {MAX_DEGREE} is available", self.p));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Column {
    ErrU,
    ErrSigma,
    ErrUPost,
    Eta,
}

/// One row of a convergence table.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRecord {
    pub level: usize,
    pub dofs: usize,
    pub h_max: f64,
    pub err_u: Option<f64>,
    pub err_sigma: Option<f64>,
    pub err_u_post: Option<f64>,
    pub eta: Option<f64>,
    pub eoc_u: Option<f64>,
    pub eoc_sigma: Option<f64>,
    pub eoc_post: Option<f64>,
    pub eoc_eta: Option<f64>,
}

impl ConvergenceRecord {
    pub fn value(&self, column: Column) -> Option<f64> {
        match column {
            Column::ErrU => self.err_u,
            Column::ErrSigma => self.err_sigma,
            Column::ErrUPost => self.err_u_post,
            Column::Eta => self.eta,
        }
    }

    /// Fills the `eoc_*` fields relative to the previous level.
    pub fn set_eoc(&mut self, prev: &ConvergenceRecord) {
        let rate = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 && self.dofs != prev.dofs => {
                Some(-(b / a).ln() / (self.dofs as f64 / prev.dofs as f64).ln())
            }
            _ => None,
        };
        self.eoc_u = rate(prev.err_u, self.err_u);
        self.eoc_sigma = rate(prev.err_sigma, self.err_sigma);
        self.eoc_post = rate(prev.err_u_post, self.err_u_post);
        self.eoc_eta = rate(prev.eta, self.eta);
    }

    fn fields(&self) -> [Option<f64>; 9] {
        [
            Some(self.h_max),
            self.err_u,
            self.err_sigma,
            self.err_u_post,
            self.eta,
            self.eoc_u,
            self.eoc_sigma,
            self.eoc_post,
            self.eoc_eta,
        ]
    }
}

/// Negated least-squares slope of `log e` against `log D_h` over the last
/// `window` records. Records with missing or non-positive values are
/// skipped with a warning.
pub fn fit_slope(records: &[ConvergenceRecord], column: Column, window: usize) -> Result<f64> {
    if window < 2 {
        return Err(Error::InvalidParameter("slope window must cover at least two levels".into()));
    }
    let start = records.len().saturating_sub(window);
    let mut pts = Vec::with_capacity(window);
    for r in &records[start..] {
        match r.value(column) {
            Some(e) if e > 0.0 => pts.push(((r.dofs as f64).ln(), e.ln())),
            other => log::warn!("level {}: skipping {:?} = {:?} in slope fit", r.level, column, other),
        }
    }
    if pts.len() < 2 {
        return Err(Error::InvalidParameter(format!("fewer than two usable values of {column:?}")));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("slope fit needs distinct D_h values".into()));
    }
    Ok(-sxy / sxx)
}

/// Number of trailing records whose `D_h` lies within a factor 10 of the
/// last one. Adaptive histories take many small steps, so slopes there are
/// fitted over a fixed range of `D_h` rather than a fixed number of levels.
pub fn decade_window(records: &[ConvergenceRecord]) -> usize {
    let Some(last) = records.last() else { return 0 };
    records.iter().rev().take_while(|r| 10 * r.dofs >= last.dofs).count()
}

/// Solves, estimates and measures on one mesh.
pub fn solve_level(
    config: &StudyConfig,
    problem: &ManufacturedProblem,
    mesh: &Mesh,
    level: usize,
) -> Result<(ConvergenceRecord, Vec<f64>)> {
    let opts = config.dpg_options();
    let g = problem.dirichlet();
    let g = g.as_ref().map(|g| g as ScalarField);
    let solution = assemble_solve(mesh, config.trial_space(), problem.kind, &problem.source, g, &opts)?;
    let orth = solution.diagnostics.relative_orthogonality();
    if orth > 1e-8 {
        log::warn!("level {level}: Galerkin orthogonality defect {orth:e} exceeds 1e-8");
    }
    let (eta, local_eta) = estimator(&solution);
    let post = if config.postprocess { Some(postprocess_all(mesh, &solution)?) } else { None };
    let errors = error_report(mesh, &solution, post.as_ref(), problem, config.quad_bump)?;
    let record = ConvergenceRecord {
        level,
        dofs: solution.total_dofs(),
        h_max: mesh.h_max,
        err_u: Some(errors.err_u),
        err_sigma: Some(errors.err_sigma),
        err_u_post: errors.err_u_post,
        eta: Some(eta),
        eoc_u: None,
        eoc_sigma: None,
        eoc_post: None,
        eoc_eta: None,
    };
    log::info!(
        "level {level}: {} elements, D_h = {}, eta = {eta:.3e}, {} linear iterations",
        mesh.num_elements(),
        record.dofs,
        solution.diagnostics.linear.iterations
    );
    Ok((record, local_eta))
}

pub fn run_study(config: &StudyConfig) -> Result<Vec<ConvergenceRecord>> {
    let mut records = Vec::new();
    run_study_with(config, |r| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok(records)
}

/// Runs the study and hands every finished record to `emit` before the next
/// level starts, so a failure leaves all completed levels reported.
pub fn run_study_with<E>(config: &StudyConfig, mut emit: E) -> Result<()>
where
    E: FnMut(&ConvergenceRecord) -> Result<()>,
{
    config.validate()?;
    let problem = config.problem.problem();
    let trial = config.trial_space();
    let mut prev: Option<ConvergenceRecord> = None;
    let mut step = |level: usize, mesh: &Mesh| -> Result<Vec<f64>> {
        let (mut record, local_eta) = solve_level(config, &problem, mesh, level)?;
        if let Some(p) = &prev {
            record.set_eoc(p);
        }
        emit(&record)?;
        prev = Some(record);
        Ok(local_eta)
    };
    match config.mode {
        Mode::Uniform => {
            let mut mesh = problem.initial_mesh();
            for level in 0..config.levels {
                if level > 0 && count_dofs(&mesh, trial) > config.max_dofs {
                    break;
                }
                step(level, &mesh)?;
                if level + 1 < config.levels {
                    mesh = mesh.refine_uniform()?;
                }
            }
        }
        Mode::Adaptive => {
            let params = MarkParams::new(config.theta)?;
            adaptive_loop(
                problem.initial_mesh(),
                params,
                config.levels,
                config.max_dofs,
                |m| count_dofs(m, trial),
                &mut step,
            )?;
        }
    }
    Ok(())
}

fn format_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

pub fn write_csv_header<W: Write>(mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    Ok(())
}

pub fn write_csv_row<W: Write>(mut out: W, record: &ConvergenceRecord) -> Result<()> {
    let mut line = format!("{},{}", record.level, record.dofs);
    for v in record.fields() {
        line.push(',');
        line.push_str(&format_cell(v));
    }
    writeln!(out, "{line}")?;
    Ok(())
}

pub fn write_csv<W: Write>(mut out: W, records: &[ConvergenceRecord]) -> Result<()> {
    write_csv_header(&mut out)?;
    for r in records {
        write_csv_row(&mut out, r)?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<ConvergenceRecord>> {
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h == CSV_HEADER => {}
        Some((_, Err(e))) => return Err(e.into()),
        _ => return Err(Error::Parse { line: 1, msg: "missing or unexpected header".into() }),
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 11 {
            return Err(parse_err(format!("expected 11 cells, found {}", cells.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| parse_err(format!("{s:?}: {e}")));
        let real = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|e| parse_err(format!("{s:?}: {e}")))
            }
        };
        records.push(ConvergenceRecord {
            level: int(cells[0])?,
            dofs: int(cells[1])?,
            h_max: real(cells[2])?.ok_or_else(|| parse_err("h_max is required".into()))?,
            err_u: real(cells[3])?,
            err_sigma: real(cells[4])?,
            err_u_post: real(cells[5])?,
            eta: real(cells[6])?,
            eoc_u: real(cells[7])?,
            eoc_sigma: real(cells[8])?,
            eoc_post: real(cells[9])?,
            eoc_eta: real(cells[10])?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(level: usize, dofs: usize, e: f64) -> ConvergenceRecord {
        ConvergenceRecord {
            level,
            dofs,
            h_max: 1.0,
            err_u: Some(e),
            err_sigma: None,
            err_u_post: None,
            eta: Some(e),
            eoc_u: None,
            eoc_sigma: None,
            eoc_post: None,
            eoc_eta: None,
        }
    }

    #[test]
    fn slope_examples() {
        let power: Vec<_> =
            [10usize, 100, 1000].iter().enumerate().map(|(i, &d)| rec(i, d, (d as f64).powf(-0.5))).collect();
        assert!((fit_slope(&power, Column::ErrU, 3).unwrap() - 0.5).abs() < 1e-12);
        let flat: Vec<_> = (0..4).map(|i| rec(i, 10 << i, 0.3)).collect();
        assert!(fit_slope(&flat, Column::ErrU, 3).unwrap().abs() < 1e-12);
        let halves: Vec<_> = (0..5).map(|i| rec(i, 4usize.pow(i as u32 + 1), 0.5f64.powi(i as i32))).collect();
        assert!((fit_slope(&halves, Column::ErrU, 3).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn slope_skips_bad_values() {
        let mut rs: Vec<_> = (0..4).map(|i| rec(i, 4usize.pow(i as u32 + 1), 0.5f64.powi(i as i32))).collect();
        rs[2].err_u = Some(0.0);
        assert!((fit_slope(&rs, Column::ErrU, 3).unwrap() - 0.5).abs() < 1e-12);
        assert!(fit_slope(&rs, Column::ErrSigma, 3).is_err());
        assert!(fit_slope(&rs, Column::ErrU, 1).is_err());
    }

    #[test]
    fn eoc_matches_definition() {
        let a = rec(0, 100, 1e-2);
        let mut b = rec(1, 400, 2.5e-3);
        b.set_eoc(&a);
        assert!((b.eoc_u.unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(b.eoc_sigma, None);
    }

    #[test]
    fn csv_roundtrip_is_bitwise() {
        let mut rs = vec![rec(0, 12, 0.1), rec(1, 48, std::f64::consts::PI * 1e-5)];
        rs[1].h_max = 1.0 / 3.0;
        rs[1].err_u_post = Some(f64::MIN_POSITIVE);
        let prev = rs[0].clone();
        rs[1].set_eoc(&prev);
        let mut buf = Vec::new();
        write_csv(&mut buf, &rs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert!(!text.contains('\r'));
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "0,12,1.0000000000000000e0,1.0000000000000001e-1,,,1.0000000000000001e-1,,,,"
        );
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rs);
    }

    #[test]
    fn validation() {
        assert!(StudyConfig::default().validate().is_ok());
        assert!(StudyConfig { levels: 0, ..Default::default() }.validate().is_err());
        assert!(StudyConfig { p: 9, ..Default::default() }.validate().is_err());
        assert!(StudyConfig { mode: Mode::Adaptive, theta: 1.5, ..Default::default() }.validate().is_err());
        assert!(StudyConfig { trial: TrialChoice::Augmented, enrichment: 1, ..Default::default() }.validate().is_err());
    }
}
