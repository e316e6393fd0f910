#![allow(dead_code)]

use maxmin_core::rational::{rat, Rational};
use maxmin_core::Instance;
use proptest::prelude::*;

/// Values in `{1/20, ..., 1}`, every player desiring at least one resource.
pub fn instance(max_players: usize, max_resources: usize) -> impl Strategy<Value = Instance> {
    (1..=max_players, 1..=max_resources).prop_flat_map(|(m, n)| {
        (
            prop::collection::vec((1i64..=20).prop_map(|k| rat(k, 20)), n),
            prop::collection::vec(prop::collection::btree_set(0..n, 1..=n), m),
        )
            .prop_map(|(values, desires)| {
                let desires: Vec<Vec<usize>> = desires
                    .into_iter()
                    .map(|s| s.into_iter().collect())
                    .collect();
                build(&values, &desires)
            })
    })
}

pub fn build(values: &[Rational], desires: &[impl AsRef<[usize]> + Clone]) -> Instance {
    Instance::new(
        (0..desires.len()).map(|p| format!("p{}", p + 1)),
        values
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("r{}", i + 1), v.clone())),
        desires.iter().enumerate().map(|(p, rs)| {
            (
                format!("p{}", p + 1),
                rs.as_ref().iter().map(|r| format!("r{}", r + 1)).collect(),
            )
        }),
    )
    .unwrap()
}
