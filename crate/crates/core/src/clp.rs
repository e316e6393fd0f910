//! Configuration LP: feasibility of `CLP(T)` by column generation and the
//! optimum `T*`.
//!
//! The master problem is the phase-1 form of the configuration LP:
//!
//! ```text
//! minimize   Σ_p s_p
//! subject to Σ_C x_{p,C} + s_p ≥ 1      for every player p
//!            Σ_{(p,C) ∋ r} x_{p,C} ≤ 1  for every resource r
//! ```
//!
//! over a growing pool of configurations. Its dual is the configuration-LP
//! dual with the extra bound `y_p ≤ 1`, so the player-row duals `y` and the
//! negated resource-row duals `z` price new columns directly: a configuration
//! `C` for `p` improves the master iff `Σ_{r∈C} z_r < y_p`. When no player has
//! an improving configuration, `(y, z)` is feasible for the full dual and its
//! objective `Σy − Σz` equals the master optimum, so a positive optimum is
//! itself the infeasibility certificate.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::instance::{Bundle, Instance, InstanceError, PlayerId, ResourceId};
use crate::rational::{format_rational, sum, Rational};
use crate::ratlp::{solve_lp, LinearProgram, LpError, LpOutcome, Relation, Sense};

/// Default cap on enumerated subset sums for exact `T*`.
pub const DEFAULT_BREAKPOINT_BUDGET: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClpError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("price of resource {0} is negative")]
    NegativePrice(ResourceId),
    #[error("expected {expected} prices, got {found}")]
    PriceCount { expected: usize, found: usize },
    #[error("target must be non-negative, got {0}")]
    NegativeTarget(Rational),
    #[error("bisection accuracy must be positive, got {0}")]
    NonPositiveDelta(Rational),
    #[error("exact T* needs {needed} subset sums, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: usize },
    #[error("master LP failed: {0}")]
    Master(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PricedBundle {
    pub cost: Rational,
    pub bundle: Bundle,
}

/// Cheapest configuration of `player` under `prices` at target `threshold`.
///
/// Returns `None` when even `R_p` is worth less than the target. Among
/// cheapest bundles the lexicographically smallest (as a sorted index list)
/// wins. Zero-value resources never enter a bundle.
pub fn min_cost_configuration(
    instance: &Instance,
    player: PlayerId,
    prices: &[Rational],
    threshold: &Rational,
) -> Result<Option<PricedBundle>, ClpError> {
    instance.check_player(player)?;
    if prices.len() != instance.resource_count() {
        return Err(ClpError::PriceCount {
            expected: instance.resource_count(),
            found: prices.len(),
        });
    }
    if let Some(r) = prices.iter().position(|z| z.is_negative()) {
        return Err(ClpError::NegativePrice(ResourceId(r)));
    }
    if threshold.is_negative() {
        return Err(ClpError::NegativeTarget(threshold.clone()));
    }

    let mut items: Vec<ResourceId> = instance
        .desires(player)
        .iter()
        .copied()
        .filter(|r| instance.value(*r).is_positive())
        .collect();
    items.sort_by(|a, b| instance.value(*b).cmp(instance.value(*a)).then(a.cmp(b)));
    let mut suffix = vec![Rational::zero(); items.len() + 1];
    for i in (0..items.len()).rev() {
        suffix[i] = &suffix[i + 1] + instance.value(items[i]);
    }
    if &suffix[0] < threshold {
        return Ok(None);
    }

    let mut search = Knapsack {
        instance,
        prices,
        threshold,
        items: &items,
        suffix: &suffix,
        chosen: Vec::new(),
        best: None,
    };
    search.explore(0, Rational::zero(), Rational::zero());
    Ok(search.best)
}

struct Knapsack<'a> {
    instance: &'a Instance,
    prices: &'a [Rational],
    threshold: &'a Rational,
    items: &'a [ResourceId],
    suffix: &'a [Rational],
    chosen: Vec<ResourceId>,
    best: Option<PricedBundle>,
}

impl Knapsack<'_> {
    fn explore(&mut self, i: usize, value: Rational, cost: Rational) {
        if let Some(best) = &self.best {
            if cost > best.cost {
                return;
            }
        }
        if &value >= self.threshold {
            let bundle: Bundle = self.chosen.iter().copied().collect();
            let improves = match &self.best {
                None => true,
                Some(best) => cost < best.cost || (cost == best.cost && bundle < best.bundle),
            };
            if improves {
                self.best = Some(PricedBundle {
                    cost: cost.clone(),
                    bundle,
                });
            }
        }
        if i == self.items.len() || &(&value + &self.suffix[i]) < self.threshold {
            return;
        }
        let r = self.items[i];
        self.chosen.push(r);
        self.explore(
            i + 1,
            &value + self.instance.value(r),
            &cost + &self.prices[r.0],
        );
        self.chosen.pop();
        self.explore(i + 1, value, cost);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigColumn {
    pub player: PlayerId,
    pub bundle: Bundle,
    pub value: Rational,
}

/// Dual prices `(y, z)` for the configuration LP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualPrices {
    pub y: Vec<Rational>,
    pub z: Vec<Rational>,
}

impl DualPrices {
    pub fn objective(&self) -> Rational {
        sum(&self.y) - sum(&self.z)
    }

    /// Checks non-negativity and `y_p ≤ Σ_{r∈C} z_r` for every configuration
    /// of every player at `target`, by exact pricing.
    pub fn verify(&self, instance: &Instance, target: &Rational) -> Result<(), String> {
        if self.y.len() != instance.player_count() || self.z.len() != instance.resource_count() {
            return Err("price vectors have the wrong length".into());
        }
        if self.y.iter().any(|v| v.is_negative()) {
            return Err("negative player price".into());
        }
        for p in instance.players() {
            let priced =
                min_cost_configuration(instance, p, &self.z, target).map_err(|e| e.to_string())?;
            if let Some(priced) = priced {
                if priced.cost < self.y[p.0] {
                    return Err(format!(
                        "player {} has configuration {:?} priced {} below y = {}",
                        instance.player_name(p),
                        priced.bundle,
                        priced.cost,
                        self.y[p.0]
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClpStatus {
    /// A fractional assignment of configurations (only positive weights).
    Feasible(Vec<(ConfigColumn, Rational)>),
    /// Dual-feasible prices with positive objective.
    Infeasible(DualPrices),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddedColumn {
    pub player: PlayerId,
    pub bundle: Bundle,
    pub cost: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationRound {
    pub iteration: usize,
    pub master_objective: Rational,
    pub added: Vec<AddedColumn>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClpVerdict {
    pub status: ClpStatus,
    pub transcript: Vec<GenerationRound>,
}

impl ClpVerdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self.status, ClpStatus::Feasible(_))
    }
}

/// Tab-separated log, one line per added column (or one line for a round
/// that added nothing): iteration, player, bundle, cost, master objective.
pub fn format_transcript(instance: &Instance, rounds: &[GenerationRound]) -> String {
    let mut out = String::new();
    for round in rounds {
        let objective = format_rational(&round.master_objective);
        if round.added.is_empty() {
            let _ = writeln!(out, "{}\t-\t-\t-\t{}", round.iteration, objective);
        }
        for col in &round.added {
            let bundle: Vec<&str> = col
                .bundle
                .iter()
                .map(|r| instance.resource_name(*r))
                .collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{{{}}}\t{}\t{}",
                round.iteration,
                instance.player_name(col.player),
                bundle.join(","),
                format_rational(&col.cost),
                objective
            );
        }
    }
    out
}

/// Decides feasibility of `CLP(target)` exactly.
pub fn clp_feasible(instance: &Instance, target: &Rational) -> Result<ClpVerdict, ClpError> {
    if target.is_negative() {
        return Err(ClpError::NegativeTarget(target.clone()));
    }
    let m = instance.player_count();
    let n = instance.resource_count();
    let mut pool: Vec<ConfigColumn> = Vec::new();
    let mut pooled: BTreeSet<(PlayerId, Bundle)> = BTreeSet::new();
    let mut transcript = Vec::new();

    for iteration in 0.. {
        let lp = master_problem(instance, &pool);
        let solution = match solve_lp(&lp)? {
            LpOutcome::Optimal(s) => s,
            LpOutcome::Infeasible => return Err(ClpError::Master("infeasible")),
            LpOutcome::Unbounded => return Err(ClpError::Master("unbounded")),
        };
        let y: Vec<Rational> = solution.dual[..m].to_vec();
        let z: Vec<Rational> = solution.dual[m..].iter().map(|w| -w).collect();

        let mut added = Vec::new();
        for p in instance.players() {
            if let Some(priced) = min_cost_configuration(instance, p, &z, target)? {
                if priced.cost < y[p.0] {
                    if !pooled.insert((p, priced.bundle.clone())) {
                        return Err(ClpError::Master("pricing returned a pooled column"));
                    }
                    added.push(AddedColumn {
                        player: p,
                        bundle: priced.bundle,
                        cost: priced.cost,
                    });
                }
            }
        }
        transcript.push(GenerationRound {
            iteration,
            master_objective: solution.objective.clone(),
            added: added.clone(),
        });
        if !added.is_empty() {
            for col in added {
                let value = sum(col.bundle.iter().map(|r| instance.value(*r)));
                pool.push(ConfigColumn {
                    player: col.player,
                    bundle: col.bundle,
                    value,
                });
            }
            continue;
        }

        let status = if solution.objective.is_zero() {
            let weights = pool
                .iter()
                .zip(&solution.primal)
                .filter(|(_, x)| x.is_positive())
                .map(|(c, x)| (c.clone(), x.clone()))
                .collect();
            ClpStatus::Feasible(weights)
        } else {
            debug_assert_eq!(z.len(), n);
            ClpStatus::Infeasible(DualPrices { y, z })
        };
        return Ok(ClpVerdict { status, transcript });
    }
    unreachable!()
}

fn master_problem(instance: &Instance, pool: &[ConfigColumn]) -> LinearProgram {
    let m = instance.player_count();
    let k = pool.len();
    let width = k + m;
    let mut objective = vec![Rational::zero(); width];
    for c in objective.iter_mut().skip(k) {
        *c = crate::rational::one();
    }
    let mut lp = LinearProgram::new(Sense::Minimize, objective);
    for p in instance.players() {
        let mut row = vec![Rational::zero(); width];
        for (j, col) in pool.iter().enumerate() {
            if col.player == p {
                row[j] = crate::rational::one();
            }
        }
        row[k + p.0] = crate::rational::one();
        lp.add_constraint(row, Relation::Ge, crate::rational::one());
    }
    for r in instance.resources() {
        let mut row = vec![Rational::zero(); width];
        for (j, col) in pool.iter().enumerate() {
            if col.bundle.contains(&r) {
                row[j] = crate::rational::one();
            }
        }
        lp.add_constraint(row, Relation::Le, crate::rational::one());
    }
    lp
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TStarMode {
    /// Binary search over subset-sum breakpoints, capped at `budget` sums.
    Exact { budget: usize },
    /// Bracket `T*` within `delta`.
    Bisect { delta: Rational },
}

impl Default for TStarMode {
    fn default() -> Self {
        TStarMode::Exact {
            budget: DEFAULT_BREAKPOINT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TStar {
    /// Largest target known feasible (exactly `T*` in exact mode).
    pub value: Rational,
    /// Smallest target known infeasible, when one was probed.
    pub infeasible_above: Option<Rational>,
    pub exact: bool,
    /// Every probed target with its feasibility, in probe order.
    pub probes: Vec<(Rational, bool)>,
}

fn subset_sums(instance: &Instance, p: PlayerId) -> BTreeSet<Rational> {
    let mut sums = BTreeSet::from([Rational::zero()]);
    for r in instance.desires(p) {
        let v = instance.value(*r);
        if v.is_zero() {
            continue;
        }
        let shifted: Vec<Rational> = sums.iter().map(|s| s + v).collect();
        sums.extend(shifted);
    }
    sums
}

/// Total number of subsets whose sums exact mode would enumerate.
pub fn breakpoint_count(instance: &Instance) -> u128 {
    instance
        .players()
        .map(|p| {
            let k = instance
                .desires(p)
                .iter()
                .filter(|r| instance.value(**r).is_positive())
                .count();
            1u128.checked_shl(k as u32).unwrap_or(u128::MAX)
        })
        .fold(0u128, |a, b| a.saturating_add(b))
}

/// Computes the configuration-LP optimum.
///
/// `CLP(T)` only changes when `T` crosses a subset sum of some `R_p`, so `T*`
/// is one of those sums; exact mode binary searches them. No target above
/// `min_p value(R_p)` can be feasible, which bounds both modes.
pub fn compute_t_star(instance: &Instance, mode: &TStarMode) -> Result<TStar, ClpError> {
    let upper = instance
        .players()
        .map(|p| instance.desired_value(p))
        .min()
        .expect("instances have players");
    let mut probes = Vec::new();
    let mut probe = |t: &Rational| -> Result<bool, ClpError> {
        let feasible = clp_feasible(instance, t)?.is_feasible();
        probes.push((t.clone(), feasible));
        Ok(feasible)
    };

    match mode {
        TStarMode::Exact { budget } => {
            let needed = breakpoint_count(instance);
            if needed > *budget as u128 {
                return Err(ClpError::BudgetExceeded {
                    needed,
                    budget: *budget,
                });
            }
            let mut all = BTreeSet::new();
            for p in instance.players() {
                all.extend(subset_sums(instance, p));
            }
            let candidates: Vec<Rational> = all
                .into_iter()
                .filter(|s| s.is_positive() && s <= &upper)
                .collect();
            // Invariant: candidates[..lo] feasible, candidates[hi..] infeasible.
            let (mut lo, mut hi) = (0usize, candidates.len());
            while lo < hi {
                let mid = (lo + hi) / 2;
                if probe(&candidates[mid])? {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            let value = if lo == 0 {
                Rational::zero()
            } else {
                candidates[lo - 1].clone()
            };
            let infeasible_above = candidates.get(lo).cloned();
            Ok(TStar {
                value,
                infeasible_above,
                exact: true,
                probes,
            })
        }
        TStarMode::Bisect { delta } => {
            if !delta.is_positive() {
                return Err(ClpError::NonPositiveDelta(delta.clone()));
            }
            if upper.is_zero() || probe(&upper)? {
                return Ok(TStar {
                    value: upper,
                    infeasible_above: None,
                    exact: false,
                    probes,
                });
            }
            let mut lo = Rational::zero();
            let mut hi = upper;
            while &(&hi - &lo) > delta {
                let mid = (&lo + &hi) / crate::rational::int(2);
                if probe(&mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(TStar {
                value: lo,
                infeasible_above: Some(hi),
                exact: false,
                probes,
            })
        }
    }
}
