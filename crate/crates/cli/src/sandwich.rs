//! Lower bound, simulated queue and upper bound side by side.

use hwlab::stats::TailEstimate;
use serde::Serialize;
use serde_json::json;

use crate::config::{Experiment, Validated};
use crate::error::{CliError, Result};
use crate::experiments::{self, csv_rows, Report};
use crate::output::Outputs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichRow {
    pub x: f64,
    pub lower: f64,
    pub lower_hw: f64,
    pub empirical: f64,
    pub empirical_hw: f64,
    pub upper: f64,
    pub upper_hw: f64,
    pub flagged: bool,
    pub seed: u64,
}

impl SandwichRow {
    /// True unless `lower <= empirical <= upper` holds within the joint
    /// half-widths of each adjacent pair.
    pub fn violates(&self) -> bool {
        let low_ok = self.lower - self.lower_hw <= self.empirical + self.empirical_hw;
        let high_ok = self.empirical - self.empirical_hw <= self.upper + self.upper_hw;
        !(low_ok && high_ok)
    }

    /// The same row with the bound columns exchanged.
    pub fn swapped(&self) -> Self {
        let mut r = SandwichRow {
            lower: self.upper,
            lower_hw: self.upper_hw,
            upper: self.lower,
            upper_hw: self.lower_hw,
            ..*self
        };
        r.flagged = r.violates();
        r
    }
}

/// Derives the three stage configs from a sandwich config.
pub fn stages(v: &Validated) -> (Validated, Validated, Validated) {
    let with = |e: Experiment| {
        let mut s = v.clone();
        s.config.experiment = e;
        s
    };
    (with(Experiment::BoundLower), with(Experiment::Simulate), with(Experiment::BoundUpper))
}

/// Checks that the stages share the queue they describe.
pub fn check_stages(lower: &Validated, sim: &Validated, upper: &Validated) -> Result<()> {
    for (name, s) in [("simulate", sim), ("upper", upper)] {
        if s.scaling != lower.scaling {
            return Err(CliError::validation(format!("{name}.scaling"), "differs from the lower-bound stage"));
        }
        if s.service != lower.service {
            return Err(CliError::validation(format!("{name}.service"), "differs from the lower-bound stage"));
        }
        if s.arrival != lower.arrival {
            return Err(CliError::validation(format!("{name}.arrival"), "differs from the lower-bound stage"));
        }
        if s.config.thresholds != lower.config.thresholds {
            return Err(CliError::validation(format!("{name}.thresholds"), "differs from the lower-bound stage"));
        }
    }
    if !lower.arrival.is_exponential() {
        return Err(CliError::validation("arrival", "the sandwich needs Poisson arrivals"));
    }
    Ok(())
}

pub fn rows(lower: &TailEstimate, emp: &hwlab::qsim::EmpiricalTail, upper: &TailEstimate, seed: u64) -> Vec<SandwichRow> {
    (0..lower.thresholds.len())
        .map(|j| {
            let mut r = SandwichRow {
                x: lower.thresholds[j],
                lower: lower.p_hat[j],
                lower_hw: lower.half_width[j],
                empirical: emp.p_hat[j],
                empirical_hw: emp.half_width[j],
                upper: upper.p_hat[j],
                upper_hw: upper.half_width[j],
                flagged: false,
                seed,
            };
            r.flagged = r.violates();
            r
        })
        .collect()
}

pub fn sandwich_report(lower: &Validated, sim: &Validated, upper: &Validated, out: &mut Outputs) -> Result<Report> {
    check_stages(lower, sim, upper)?;
    let (lo_summary, lo) = experiments::bound_lower(lower, out)?;
    let (sim_summary, emp) = experiments::simulate(sim, out)?;
    let (up_summary, up) = experiments::bound_upper(upper, out)?;
    let rows = rows(&lo, &emp, &up, lower.config.seed);
    out.write("sandwich.csv", |w| csv_rows(w, &rows))?;
    let flagged = rows.iter().filter(|r| r.flagged).count();
    let control: Vec<SandwichRow> = rows.iter().map(SandwichRow::swapped).collect();
    let control_flagged = control.iter().filter(|r| r.flagged).count();
    Ok(Report {
        summary: json!({
            "rows": rows.len(),
            "flagged": flagged,
            "negative_control_flagged": control_flagged,
            "lower": lo_summary,
            "simulate": sim_summary,
            "upper": up_summary,
        }),
        check_passed: Some(flagged == 0 && control_flagged == rows.len()),
    })
}

pub fn run(v: &Validated, out: &mut Outputs) -> Result<Report> {
    let (lower, sim, upper) = stages(v);
    sandwich_report(&lower, &sim, &upper, out)
}
