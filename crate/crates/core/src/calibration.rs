//! Calibration of the threshold pair `(q, q̂)`.
//!
//! Every cell `(p, p̂)` of a quantile grid yields thresholds
//! `q = Q(p, errors)` and `q̂ = Q(p̂, scores)`. Among cells whose selector FDP
//! stays strictly below `fdp_max`, the one with the highest power wins.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{empirical_quantile, Dataset, Selector};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_FDP_MAX: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub p_values: Vec<f64>,
    pub p_hat_values: Vec<f64>,
    pub fdp_max: f64,
}

impl Default for GridSpec {
    /// `p ∈ {0.50, 0.55, …, 0.95}`, `p̂ ∈ {0.1, …, 0.9}`, `fdp_max = 0.2`.
    fn default() -> Self {
        Self {
            p_values: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            p_hat_values: (1..10).map(|i| i as f64 / 10.0).collect(),
            fdp_max: DEFAULT_FDP_MAX,
        }
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p_values.is_empty() || self.p_hat_values.is_empty() {
            return Err(invalid("grid lists must be nonempty"));
        }
        if !strictly_increasing(&self.p_values) || !strictly_increasing(&self.p_hat_values) {
            return Err(invalid("grid lists must be strictly increasing"));
        }
        if self.p_values.iter().any(|&p| !(0.5..1.0).contains(&p)) {
            return Err(invalid("p values must lie in [0.5, 1)"));
        }
        if self.p_hat_values.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(invalid("p_hat values must lie in (0, 1)"));
        }
        if !(self.fdp_max > 0.0 && self.fdp_max < 1.0) {
            return Err(invalid(format!("fdp_max {} outside (0, 1)", self.fdp_max)));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.p_values.len() * self.p_hat_values.len()
    }
}

/// Selector power and FDP with the counts behind them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorMetrics {
    pub power: f64,
    pub fdp: f64,
    pub n_selected: usize,
    pub n_high_error: usize,
    pub n_true_discoveries: usize,
}

impl SelectorMetrics {
    /// A cell whose power or FDP fell back to a 0/0 convention.
    pub fn is_degenerate(&self) -> bool {
        self.n_selected == 0 || self.n_high_error == 0
    }
}

fn count_metrics(selector: &Selector, pairs: impl Iterator<Item = (f64, f64)>) -> SelectorMetrics {
    let (mut selected, mut high, mut tp) = (0usize, 0usize, 0usize);
    for (error, score) in pairs {
        let s = selector.selects(score);
        let h = selector.is_high_error(error);
        selected += s as usize;
        high += h as usize;
        tp += (s && h) as usize;
    }
    let power = if high == 0 {
        1.0
    } else {
        tp as f64 / high as f64
    };
    let fdp = if selected == 0 {
        0.0
    } else {
        (selected - tp) as f64 / selected as f64
    };
    SelectorMetrics {
        power,
        fdp,
        n_selected: selected,
        n_high_error: high,
        n_true_discoveries: tp,
    }
}

/// Power `#{S=1, E>q} / #{E>q}` and FDP `#{S=1, E≤q} / #{S=1}`.
///
/// Power is 1 when there are no high-error rows; FDP is 0 when nothing is
/// selected.
pub fn selector_metrics(selector: &Selector, data: &Dataset) -> Result<SelectorMetrics> {
    let scores = data.scores()?;
    Ok(count_metrics(
        selector,
        data.iter().map(|s| s.true_error).zip(scores),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub p: f64,
    pub p_hat: f64,
    pub q: f64,
    pub q_hat: f64,
    pub power: f64,
    pub fdp: f64,
    pub degenerate: bool,
    pub qualifying: bool,
}

impl GridCell {
    pub fn selector(&self) -> Selector {
        Selector {
            q: self.q,
            q_hat: self.q_hat,
            p: self.p,
            p_hat: self.p_hat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub selector: Selector,
    pub power: f64,
    pub fdp: f64,
    pub grid_report: Vec<GridCell>,
}

/// Evaluates every grid cell, `p` outer and `p̂` inner.
pub fn grid_report(grid: &GridSpec, data: &Dataset) -> Result<Vec<GridCell>> {
    grid.validate()?;
    let errors = data.errors();
    let scores = data.scores()?;
    let mut cells = Vec::with_capacity(grid.n_cells());
    for &p in &grid.p_values {
        let q = empirical_quantile(p, &errors)?;
        for &p_hat in &grid.p_hat_values {
            let q_hat = empirical_quantile(p_hat, &scores)?;
            let sel = Selector { q, q_hat, p, p_hat };
            let m = count_metrics(&sel, errors.iter().copied().zip(scores.iter().copied()));
            let degenerate = m.is_degenerate();
            cells.push(GridCell {
                p,
                p_hat,
                q,
                q_hat,
                power: m.power,
                fdp: m.fdp,
                degenerate,
                qualifying: !degenerate && m.fdp < grid.fdp_max,
            });
        }
    }
    Ok(cells)
}

/// Picks the qualifying cell with the highest power. Ties go to the lowest
/// FDP, then the largest `p`, then the smallest `p̂`.
pub fn select_cell(cells: &[GridCell]) -> Result<&GridCell> {
    let better = |a: &GridCell, b: &GridCell| {
        a.power
            .total_cmp(&b.power)
            .then(b.fdp.total_cmp(&a.fdp))
            .then(a.p.total_cmp(&b.p))
            .then(b.p_hat.total_cmp(&a.p_hat))
    };
    if let Some(best) = cells
        .iter()
        .filter(|c| c.qualifying)
        .max_by(|a, b| better(a, b))
    {
        return Ok(best);
    }
    let pool: Vec<&GridCell> = if cells.iter().any(|c| !c.degenerate) {
        cells.iter().filter(|c| !c.degenerate).collect()
    } else {
        cells.iter().collect()
    };
    let closest = pool
        .into_iter()
        .min_by(|a, b| a.fdp.total_cmp(&b.fdp).then(better(b, a)))
        .ok_or_else(|| invalid("empty grid report"))?;
    Err(Error::CalibrationInfeasible {
        best_fdp: closest.fdp,
        p: closest.p,
        p_hat: closest.p_hat,
    })
}

pub fn calibrate(grid: &GridSpec, data: &Dataset) -> Result<CalibrationResult> {
    let cells = grid_report(grid, data)?;
    let best = *select_cell(&cells)?;
    Ok(CalibrationResult {
        selector: best.selector(),
        power: best.power,
        fdp: best.fdp,
        grid_report: cells,
    })
}

/// Writes the grid report with columns `p, p_hat, q, q_hat, power, fdp, qualifying`.
pub fn write_grid_report<W: Write>(w: W, cells: &[GridCell]) -> Result<()> {
    let err = |e: csv::Error| Error::Ingest(format!("write failed: {e}"));
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["p", "p_hat", "q", "q_hat", "power", "fdp", "qualifying"])
        .map_err(err)?;
    for c in cells {
        wtr.write_record([
            c.p.to_string(),
            c.p_hat.to_string(),
            c.q.to_string(),
            c.q_hat.to_string(),
            c.power.to_string(),
            c.fdp.to_string(),
            c.qualifying.to_string(),
        ])
        .map_err(err)?;
    }
    wtr.flush()
        .map_err(|e| Error::Ingest(format!("write failed: {e}")))
}
