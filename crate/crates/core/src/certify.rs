//! Dual certificates from stuck searches.
//!
//! When the local search can neither build nor contract, the prices
//!
//! ```text
//! y_p = 1 − 4λ/3            if p is active, else 0
//! z_r = 1 − 4λ/3            if r is covered and fat
//!       min{v_r, 5λ/6}      if r is covered and thin
//!       0                   otherwise
//! ```
//!
//! are feasible for the dual of CLP(1) on the normalized instance and have
//! objective `Σy − Σz ≥ y_{p0} > 0`. Scaling them up without bound shows the
//! primal is infeasible. Nothing here is trusted: feasibility is re-checked
//! with the pricing oracle and the objective is re-derived blocker by blocker.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clp::{min_cost_configuration, ClpError};
use crate::instance::{Bundle, Instance, NormalizedInstance, PlayerId};
use crate::matching::{find_addable_edge, SearchState};
use crate::rational::{format_rational, sum, Rational};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error("state is not stuck: {0}")]
    NotStuck(&'static str),
    #[error(transparent)]
    Clp(#[from] ClpError),
}

/// `1 − 4λ/3`, the price of an active player and of a covered fat resource.
pub fn active_price(lambda: &Rational) -> Rational {
    Rational::one() - lambda * Rational::new(4.into(), 3.into())
}

/// `5λ/6`, the cap on the price of a covered thin resource.
pub fn thin_cap(lambda: &Rational) -> Rational {
    lambda * Rational::new(5.into(), 6.into())
}

/// Players activated by one blocker and the resources it covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockerGroup {
    pub players: Vec<PlayerId>,
    pub resources: Bundle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualCertificate {
    pub y: Vec<Rational>,
    pub z: Vec<Rational>,
    pub objective: Rational,
    pub blocker_groups: Vec<BlockerGroup>,
}

impl DualCertificate {
    /// `(αy, αz)`; still feasible for every `α > 0`.
    pub fn scaled(&self, alpha: &Rational) -> Self {
        Self {
            y: self.y.iter().map(|v| v * alpha).collect(),
            z: self.z.iter().map(|v| v * alpha).collect(),
            objective: &self.objective * alpha,
            blocker_groups: self.blocker_groups.clone(),
        }
    }

    pub fn export(&self, instance: &Instance, balances: &BalanceReport) -> CertificateExport {
        let names = |ps: &[PlayerId]| {
            ps.iter()
                .map(|p| instance.player_name(*p).to_string())
                .collect()
        };
        CertificateExport {
            y: instance
                .players()
                .map(|p| {
                    (
                        instance.player_name(p).to_string(),
                        format_rational(&self.y[p.0]),
                    )
                })
                .collect(),
            z: instance
                .resources()
                .map(|r| {
                    (
                        instance.resource_name(r).to_string(),
                        format_rational(&self.z[r.0]),
                    )
                })
                .collect(),
            objective: format_rational(&self.objective),
            blockers: balances
                .rows
                .iter()
                .map(|row| BalanceExport {
                    index: row.index,
                    players: names(&row.players),
                    resources: row
                        .resources
                        .iter()
                        .map(|r| instance.resource_name(*r).to_string())
                        .collect(),
                    y_sum: format_rational(&row.y_sum),
                    z_sum: format_rational(&row.z_sum),
                    balance: format_rational(&row.balance),
                })
                .collect(),
        }
    }
}

/// Builds the certificate of a stuck state. Errors if a blocker is
/// removable or an addable edge exists.
pub fn construct_dual_certificate(
    ni: &NormalizedInstance,
    state: &SearchState,
) -> Result<DualCertificate, CertifyError> {
    if state.removable_index().is_some() {
        return Err(CertifyError::NotStuck("a blocker is removable"));
    }
    if find_addable_edge(ni, state).is_some() {
        return Err(CertifyError::NotStuck("an addable edge exists"));
    }
    let base = &ni.base;
    let high = active_price(&ni.lambda);
    let cap = thin_cap(&ni.lambda);

    let mut y = vec![Rational::zero(); base.player_count()];
    for p in state.active() {
        y[p.0] = high.clone();
    }
    let mut z = vec![Rational::zero(); base.resource_count()];
    for r in state.covered() {
        let v = ni.value(*r);
        z[r.0] = if v >= &ni.lambda {
            high.clone()
        } else {
            v.clone().min(cap.clone())
        };
    }
    let objective = sum(&y) - sum(&z);
    let blocker_groups = state
        .blockers
        .iter()
        .map(|b| BlockerGroup {
            players: b.blocking.iter().map(|e| e.player).collect(),
            resources: b.resources(),
        })
        .collect();
    Ok(DualCertificate {
        y,
        z,
        objective,
        blocker_groups,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayerMargin {
    pub player: PlayerId,
    pub y: Rational,
    /// Cheapest configuration under `z`; `None` if the player has none.
    pub min_cost: Option<Rational>,
    /// `min_cost − y`; `None` when the dual constraint is vacuous.
    pub margin: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibilityReport {
    pub margins: Vec<PlayerMargin>,
    pub passed: bool,
}

impl FeasibilityReport {
    pub fn failures(&self) -> impl Iterator<Item = &PlayerMargin> {
        self.margins
            .iter()
            .filter(|m| m.margin.as_ref().is_some_and(Signed::is_negative))
    }
}

/// Checks `y_p ≤ Σ_{r∈C} z_r` for every configuration `C` of every player at
/// normalized target 1, by minimizing the right side with the pricing oracle.
pub fn verify_certificate_feasibility(
    ni: &NormalizedInstance,
    cert: &DualCertificate,
) -> Result<FeasibilityReport, CertifyError> {
    let one = Rational::one();
    let mut margins = Vec::with_capacity(ni.base.player_count());
    let mut passed =
        cert.y.len() == ni.base.player_count() && cert.z.iter().all(|z| !z.is_negative());
    for p in ni.base.players() {
        let y = cert.y.get(p.0).cloned().unwrap_or_default();
        let min_cost = min_cost_configuration(&ni.base, p, &cert.z, &one)?.map(|c| c.cost);
        let margin = min_cost.as_ref().map(|c| c - &y);
        if margin.as_ref().is_some_and(Signed::is_negative) {
            passed = false;
        }
        margins.push(PlayerMargin {
            player: p,
            y,
            min_cost,
            margin,
        });
    }
    Ok(FeasibilityReport { margins, passed })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceRow {
    /// 1-based blocker index.
    pub index: usize,
    pub players: Vec<PlayerId>,
    pub resources: Bundle,
    pub y_sum: Rational,
    pub z_sum: Rational,
    pub balance: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceReport {
    pub rows: Vec<BalanceRow>,
    pub root_price: Rational,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Per-blocker accounting: every `Σ_{P_i} y − Σ_{R_i} z` is non-negative,
/// they add up with `y_{p0}` to the objective, and the objective is at least
/// `y_{p0} > 0`.
pub fn check_blocker_balances(
    ni: &NormalizedInstance,
    state: &SearchState,
    cert: &DualCertificate,
) -> BalanceReport {
    let mut failures = Vec::new();
    let price = |v: &[Rational], i: usize| v.get(i).cloned().unwrap_or_default();
    let mut rows = Vec::new();
    for (i, b) in state.blockers.iter().enumerate() {
        let players: Vec<PlayerId> = b.blocking.iter().map(|e| e.player).collect();
        let resources = b.resources();
        let y_sum = players
            .iter()
            .fold(Rational::zero(), |acc, p| acc + price(&cert.y, p.0));
        let z_sum = resources
            .iter()
            .fold(Rational::zero(), |acc, r| acc + price(&cert.z, r.0));
        let balance = &y_sum - &z_sum;
        if balance.is_negative() {
            failures.push(format!(
                "blocker {} has balance {}",
                i + 1,
                format_rational(&balance)
            ));
        }
        rows.push(BalanceRow {
            index: i + 1,
            players,
            resources,
            y_sum,
            z_sum,
            balance,
        });
    }
    let root_price = price(&cert.y, state.root.0);
    let reassembled = rows
        .iter()
        .fold(root_price.clone(), |acc, r| acc + &r.balance);
    let recomputed = sum(&cert.y) - sum(&cert.z);
    if recomputed != cert.objective {
        failures.push(format!(
            "stored objective {} differs from Σy − Σz = {}",
            format_rational(&cert.objective),
            format_rational(&recomputed)
        ));
    }
    if reassembled != cert.objective {
        failures.push(format!(
            "y_p0 + Σ balances = {} differs from objective {}",
            format_rational(&reassembled),
            format_rational(&cert.objective)
        ));
    }
    if !root_price.is_positive() {
        failures.push("root price is not positive".into());
    }
    if cert.objective < root_price {
        failures.push(format!(
            "objective {} is below y_p0 = {}",
            format_rational(&cert.objective),
            format_rational(&root_price)
        ));
    }
    if root_price != active_price(&ni.lambda) {
        failures.push("root price differs from 1 − 4λ/3".into());
    }
    BalanceReport {
        passed: failures.is_empty(),
        rows,
        root_price,
        failures,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceExport {
    pub index: usize,
    pub players: Vec<String>,
    pub resources: Vec<String>,
    pub y_sum: String,
    pub z_sum: String,
    pub balance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateExport {
    pub y: BTreeMap<String, String>,
    pub z: BTreeMap<String, String>,
    pub objective: String,
    pub blockers: Vec<BalanceExport>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::ResourceId;
    use crate::instance::{lambda, normalize};
    use crate::matching::{Blocker, Edge, Matching};
    use crate::rational::{int, rat};
    use std::collections::BTreeSet;

    fn inst(values: &[Rational], desires: &[&[usize]]) -> Instance {
        Instance::new(
            (0..desires.len()).map(|p| format!("p{}", p + 1)),
            values
                .iter()
                .enumerate()
                .map(|(i, v)| (format!("r{}", i + 1), v.clone())),
            desires.iter().enumerate().map(|(p, rs)| {
                (
                    format!("p{}", p + 1),
                    rs.iter().map(|r| format!("r{}", r + 1)).collect(),
                )
            }),
        )
        .unwrap()
    }

    #[test]
    fn constants() {
        let l = lambda();
        assert_eq!(active_price(&l), rat(15, 23));
        assert_eq!(thin_cap(&l), rat(5, 23));
        assert_eq!(thin_cap(&l) * int(3), active_price(&l));
        assert_eq!(&l * rat(5, 2), active_price(&l));
        assert_eq!(&l * int(2), rat(12, 23));
        assert!(&l * int(2) <= active_price(&l));
    }

    fn shared_stuck() -> (NormalizedInstance, SearchState) {
        let i = inst(&[int(1)], &[&[0], &[0]]);
        let ni = normalize(&i, &int(1)).unwrap();
        let m = Matching::from_edges([Edge::fat(PlayerId(0), ResourceId(0))]).unwrap();
        let mut state = SearchState::new(m, PlayerId(1));
        state.build(Edge::fat(PlayerId(1), ResourceId(0))).unwrap();
        (ni, state)
    }

    #[test]
    fn shared_resource_certificate() {
        let (ni, state) = shared_stuck();
        let cert = construct_dual_certificate(&ni, &state).unwrap();
        assert_eq!(cert.y, vec![rat(15, 23), rat(15, 23)]);
        assert_eq!(cert.z, vec![rat(15, 23)]);
        assert_eq!(cert.objective, rat(15, 23));

        let report = verify_certificate_feasibility(&ni, &cert).unwrap();
        assert!(report.passed);
        assert!(report
            .margins
            .iter()
            .all(|m| m.margin == Some(Rational::zero())));

        let balances = check_blocker_balances(&ni, &state, &cert);
        assert!(balances.passed, "{:?}", balances.failures);
        assert_eq!(balances.rows[0].balance, Rational::zero());

        for alpha in [int(2), int(10)] {
            assert!(
                verify_certificate_feasibility(&ni, &cert.scaled(&alpha))
                    .unwrap()
                    .passed
            );
        }

        let export = cert.export(&ni.base, &balances);
        assert_eq!(export.y["p1"], "15/23");
        assert_eq!(export.objective, "15/23");
        assert_eq!(export.blockers[0].balance, "0/1");
    }

    #[test]
    fn corrupted_certificate_fails() {
        let (ni, state) = shared_stuck();
        let mut cert = construct_dual_certificate(&ni, &state).unwrap();
        cert.z[0] = rat(1, 23);
        let report = verify_certificate_feasibility(&ni, &cert).unwrap();
        assert!(!report.passed);
        assert_eq!(report.failures().count(), 2);
        assert!(!check_blocker_balances(&ni, &state, &cert).passed);
    }

    #[test]
    fn rejects_states_that_are_not_stuck() {
        let i = inst(&[int(1), int(1)], &[&[0, 1], &[0, 1]]);
        let ni = normalize(&i, &int(1)).unwrap();
        let m = Matching::from_edges([Edge::fat(PlayerId(0), ResourceId(0))]).unwrap();
        let state = SearchState::new(m.clone(), PlayerId(1));
        assert_eq!(
            construct_dual_certificate(&ni, &state),
            Err(CertifyError::NotStuck("an addable edge exists"))
        );
        let mut state = SearchState::new(m, PlayerId(1));
        state.build(Edge::fat(PlayerId(1), ResourceId(1))).unwrap();
        assert_eq!(
            construct_dual_certificate(&ni, &state),
            Err(CertifyError::NotStuck("a blocker is removable"))
        );
    }

    #[test]
    fn thin_and_uncovered_prices() {
        // p1 holds {t1,t2}; root p2 wants {t1,t2} too; nobody else has room.
        // t3 is desired by nobody and stays uncovered.
        let t = rat(3, 23);
        let i = inst(&[t.clone(), t.clone(), t.clone()], &[&[0, 1], &[0, 1]]);
        let ni = normalize(&i, &int(1)).unwrap();
        let e = Edge::thin(PlayerId(0), [ResourceId(0), ResourceId(1)]);
        let m = Matching::from_edges([e.clone()]).unwrap();
        let state = SearchState::from_parts(
            m,
            PlayerId(1),
            vec![Blocker {
                edge: Edge::thin(PlayerId(1), [ResourceId(0), ResourceId(1)]),
                blocking: BTreeSet::from([e]),
            }],
        );
        let cert = construct_dual_certificate(&ni, &state).unwrap();
        assert_eq!(cert.z, vec![t.clone(), t, Rational::zero()]);
        assert_eq!(cert.objective, rat(24, 23));
        assert!(verify_certificate_feasibility(&ni, &cert).unwrap().passed);
        let balances = check_blocker_balances(&ni, &state, &cert);
        assert!(balances.passed);
        assert_eq!(balances.rows[0].balance, rat(9, 23));
    }

    #[test]
    fn inactive_players_pass_vacuously() {
        // p3 is inactive with y = 0; its cheapest configuration costs ≥ 0.
        let i = inst(&[int(1), int(1)], &[&[0], &[0], &[1]]);
        let ni = normalize(&i, &int(1)).unwrap();
        let m = Matching::from_edges([
            Edge::fat(PlayerId(0), ResourceId(0)),
            Edge::fat(PlayerId(2), ResourceId(1)),
        ])
        .unwrap();
        let mut state = SearchState::new(m, PlayerId(1));
        state.build(Edge::fat(PlayerId(1), ResourceId(0))).unwrap();
        let cert = construct_dual_certificate(&ni, &state).unwrap();
        let report = verify_certificate_feasibility(&ni, &cert).unwrap();
        assert!(report.passed);
        assert_eq!(report.margins[2].y, Rational::zero());
        assert_eq!(report.margins[2].margin, Some(Rational::zero()));
    }
}
