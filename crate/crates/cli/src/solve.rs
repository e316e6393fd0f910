//! The end-to-end pipeline: `T*`, normalization, local search, and then
//! either an allocation or a verified certificate.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use maxmin_core::certify::{
    check_blocker_balances, construct_dual_certificate, verify_certificate_feasibility,
    CertificateExport,
};
use maxmin_core::clp::{
    breakpoint_count, compute_t_star, TStar, TStarMode, DEFAULT_BREAKPOINT_BUDGET,
};
use maxmin_core::matching::{
    complete_allocation, EdgePolicy, LocalSearch, PerfectOutcome, SearchConfig, SearchObserver,
    SearchState, TraceEvent, TraceRecord,
};
use maxmin_core::oracle::verify_allocation;
use maxmin_core::rational::Fraction;
use maxmin_core::{
    bundle_value, format_rational, lambda, normalize, parse_rational, Allocation, Bundle, Instance,
    NormalizedInstance, PlayerId, Rational,
};
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetSpec {
    Auto,
    Fixed(Rational),
}

impl FromStr for TargetSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        parse_rational(s)
            .map(Self::Fixed)
            .map_err(|e| e.to_string())
    }
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::Fixed(t) => write!(f, "{}", Fraction(t)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveOptions {
    pub target: TargetSpec,
    /// Bisection accuracy, used only when exact `T*` is over budget.
    /// Without it an over-budget instance is an error.
    pub delta: Option<Rational>,
    /// Subset sums exact `T*` may enumerate.
    pub budget: usize,
    pub policy: EdgePolicy,
    /// Collect a trace record per search step.
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            target: TargetSpec::Auto,
            delta: None,
            budget: DEFAULT_BREAKPOINT_BUDGET,
            policy: EdgePolicy::Canonical,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Allocated,
    #[serde(rename = "Certified-Infeasible")]
    CertifiedInfeasible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub players: usize,
    pub resources: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TStarSummary {
    /// `T*` itself when exact, otherwise the feasible end of the bracket.
    pub value: String,
    pub exact: bool,
    pub infeasible_above: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateSummary {
    #[serde(flatten)]
    pub certificate: CertificateExport,
    pub feasibility_passed: bool,
    pub balances_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub instance: InstanceSummary,
    pub t_star: TStarSummary,
    pub target: String,
    pub outcome: Outcome,
    /// Per-player value of the allocation (empty when infeasible).
    pub values: BTreeMap<String, String>,
    pub min_value: Option<String>,
    /// `min_value / T*`; absent when either is unavailable or `T*` is zero.
    pub ratio: Option<String>,
    pub builds: usize,
    pub contracts: usize,
    pub wall_time_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub certificate: Option<CertificateSummary>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub report: RunReport,
    pub t_star: TStar,
    pub target: Rational,
    pub allocation: Option<Allocation>,
    pub min_value: Option<Rational>,
    /// Stuck state behind a certificate.
    pub stuck: Option<SearchState>,
    pub trace: Vec<TraceRecord>,
}

/// Runs the pipeline without watching the search.
pub fn solve(instance: &Instance, options: &SolveOptions) -> Result<SolveResult, CliError> {
    solve_with(
        instance,
        options,
        |_: &NormalizedInstance, _: &SearchState, _: &TraceEvent| {},
    )
}

/// Runs the pipeline, handing every search step to `observer`.
pub fn solve_with<O: SearchObserver>(
    instance: &Instance,
    options: &SolveOptions,
    mut observer: O,
) -> Result<SolveResult, CliError> {
    let started = Instant::now();
    let mode = if breakpoint_count(instance) <= options.budget as u128 {
        TStarMode::Exact {
            budget: options.budget,
        }
    } else if let Some(delta) = &options.delta {
        TStarMode::Bisect {
            delta: delta.clone(),
        }
    } else {
        TStarMode::Exact {
            budget: options.budget,
        }
    };
    let t_star = compute_t_star(instance, &mode)?;
    let target = match &options.target {
        TargetSpec::Auto => t_star.value.clone(),
        TargetSpec::Fixed(t) if t.is_positive() => t.clone(),
        TargetSpec::Fixed(t) => {
            return Err(CliError::InvalidArgument(format!(
                "target must be positive, got {}",
                Fraction(t)
            )))
        }
    };

    let mut trace = Vec::new();
    let mut builds = 0;
    let mut contracts = 0;
    let mut stuck = None;
    let allocation = if target.is_zero() {
        // Only reachable with `auto` and T* = 0: every allocation meets 6/23·0.
        Some(leftover_allocation(instance))
    } else {
        let ni = normalize(instance, &target)?;
        let config = SearchConfig {
            policy: options.policy,
            ..SearchConfig::default()
        };
        let recording = |ni: &NormalizedInstance, state: &SearchState, event: &TraceEvent| {
            if options.trace {
                trace.push(event.to_record(instance));
            }
            observer.on_step(ni, state, event);
        };
        let mut search = LocalSearch::with_observer(&ni, config, recording);
        let outcome = search.perfect_matching()?;
        let stats = search.stats();
        builds = stats.builds;
        contracts = stats.contracts;
        match outcome {
            PerfectOutcome::Perfect(m) => Some(complete_allocation(instance, &m)?),
            PerfectOutcome::Stuck(state) => {
                stuck = Some((ni, state));
                None
            }
        }
    };

    let t_summary = TStarSummary {
        value: format_rational(&t_star.value),
        exact: t_star.exact,
        infeasible_above: t_star.infeasible_above.as_ref().map(format_rational),
    };
    let mut report = RunReport {
        instance: InstanceSummary {
            players: instance.player_count(),
            resources: instance.resource_count(),
        },
        t_star: t_summary,
        target: format_rational(&target),
        outcome: Outcome::Allocated,
        values: BTreeMap::new(),
        min_value: None,
        ratio: None,
        builds,
        contracts,
        wall_time_ms: 0.0,
        certificate: None,
    };

    let mut min_value = None;
    if let Some(allocation) = &allocation {
        let audited = verify_allocation(instance, allocation)?;
        let guaranteed = lambda() * &target;
        if audited < guaranteed {
            return Err(CliError::SelfAudit(format!(
                "allocation worth {} is below 6/23·target = {}",
                Fraction(&audited),
                Fraction(&guaranteed)
            )));
        }
        for p in instance.players() {
            let v = bundle_value(instance, p, allocation.bundle(p))?;
            report
                .values
                .insert(instance.player_name(p).to_string(), format_rational(&v));
        }
        report.min_value = Some(format_rational(&audited));
        if !t_star.value.is_zero() {
            report.ratio = Some(format_rational(&(&audited / &t_star.value)));
        }
        min_value = Some(audited);
    }

    let stuck_state = match stuck {
        Some((ni, state)) => {
            let cert = construct_dual_certificate(&ni, &state)?;
            let feasibility = verify_certificate_feasibility(&ni, &cert)?;
            let balances = check_blocker_balances(&ni, &state, &cert);
            if !feasibility.passed || !balances.passed {
                return Err(CliError::SelfAudit(format!(
                    "certificate failed verification: {:?}",
                    balances.failures
                )));
            }
            report.outcome = Outcome::CertifiedInfeasible;
            report.certificate = Some(CertificateSummary {
                certificate: cert.export(instance, &balances),
                feasibility_passed: feasibility.passed,
                balances_passed: balances.passed,
            });
            Some(state)
        }
        None => None,
    };

    report.wall_time_ms = started.elapsed().as_secs_f64() * 1000.0;
    Ok(SolveResult {
        report,
        t_star,
        target,
        allocation,
        min_value,
        stuck: stuck_state,
        trace,
    })
}

/// Every resource to the lowest-index player desiring it, else the first.
fn leftover_allocation(instance: &Instance) -> Allocation {
    let mut bundles = vec![Bundle::new(); instance.player_count()];
    for r in instance.resources() {
        let owner = instance
            .players()
            .find(|p| instance.desires_resource(*p, r))
            .unwrap_or(PlayerId(0));
        bundles[owner.0].insert(r);
    }
    Allocation { bundles }
}
