//! Integrality-gap experiments: exact `T*`, exact OPT, and what the local
//! search achieves, on a batch of generated instances.

use maxmin_core::clp::{compute_t_star, TStarMode};
use maxmin_core::oracle::{brute_force_opt, gap_ratio, OptBudget};
use maxmin_core::rational::{approx_f64, rat};
use maxmin_core::{format_rational, Instance, Rational};
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::generate::{generate_instance, GeneratorKind};
use crate::solve::{solve, SolveOptions, TargetSpec};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapOptions {
    pub kind: GeneratorKind,
    pub players: usize,
    pub resources: usize,
    pub trials: usize,
    pub seed: u64,
    /// Subset-sum budget for exact `T*`.
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub trial: usize,
    pub seed: u64,
    pub t_star: String,
    pub opt: String,
    /// `T*/OPT`, or `"degenerate"` when OPT is zero.
    pub gap: String,
    pub min_value: String,
    /// `min_value / T*`, or `"degenerate"` when `T*` is zero.
    pub ratio: String,
    #[serde(skip)]
    pub gap_exact: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub trials: usize,
    pub degenerate: usize,
    pub max_gap: Option<String>,
    pub max_gap_approx: Option<f64>,
    /// Every non-degenerate gap is at most 23/6.
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub rows: Vec<GapRow>,
    pub summary: GapSummary,
}

const DEGENERATE: &str = "degenerate";

/// One row for one instance.
pub fn gap_row(
    instance: &Instance,
    trial: usize,
    seed: u64,
    budget: usize,
) -> Result<GapRow, CliError> {
    let t_star = compute_t_star(instance, &TStarMode::Exact { budget })?.value;
    let opt = brute_force_opt(instance, OptBudget::default())?;
    let solved = solve(
        instance,
        &SolveOptions {
            target: TargetSpec::Auto,
            budget,
            ..SolveOptions::default()
        },
    )?;
    let min_value = solved
        .min_value
        .ok_or_else(|| CliError::SelfAudit("no allocation at target T*".into()))?;
    let gap_exact = gap_ratio(&t_star, &opt);
    Ok(GapRow {
        trial,
        seed,
        t_star: format_rational(&t_star),
        opt: format_rational(&opt),
        gap: gap_exact
            .as_ref()
            .map_or(DEGENERATE.into(), format_rational),
        ratio: if t_star.is_zero() {
            DEGENERATE.into()
        } else {
            format_rational(&(&min_value / &t_star))
        },
        min_value: format_rational(&min_value),
        gap_exact,
    })
}

/// Trials run in parallel; rows come back in trial order. Trial `i` uses
/// seed `seed + i`.
pub fn run_gap(options: &GapOptions) -> Result<GapTable, CliError> {
    let rows = (0..options.trials)
        .into_par_iter()
        .map(|i| {
            let seed = options.seed.wrapping_add(i as u64);
            let instance =
                generate_instance(options.kind, options.players, options.resources, seed)?;
            gap_row(&instance, i, seed, options.budget)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let bound = rat(23, 6);
    let max = rows.iter().filter_map(|r| r.gap_exact.clone()).max();
    let summary = GapSummary {
        trials: rows.len(),
        degenerate: rows.iter().filter(|r| r.gap_exact.is_none()).count(),
        max_gap_approx: max.as_ref().map(approx_f64),
        max_gap: max.as_ref().map(format_rational),
        within_bound: max.map_or(true, |g| g <= bound),
    };
    Ok(GapTable { rows, summary })
}

impl GapTable {
    /// Tab-separated rows followed by a summary line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("trial\tseed\tT*\tOPT\tgap\tmin_value\tratio\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.trial, r.seed, r.t_star, r.opt, r.gap, r.min_value, r.ratio
            ));
        }
        let s = &self.summary;
        out.push_str(&format!(
            "max\t-\t-\t-\t{}\t-\t-\t# {} trials, {} degenerate, within 23/6: {}\n",
            s.max_gap.as_deref().unwrap_or(DEGENERATE),
            s.trials,
            s.degenerate,
            s.within_bound
        ));
        out
    }
}
