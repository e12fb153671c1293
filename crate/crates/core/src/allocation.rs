//! Treatment allocation policies.
//!
//! Each policy turns stratum sizes `n_J` into cell sizes `n_{J,T}`. Policies
//! are registered by name so configuration files and the command line can
//! pick one at runtime.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::strata::{CountTable, Treatment};

pub trait AllocationPolicy: Send + Sync {
    fn name(&self) -> &'static str;

    /// Returns a copy of `counts` with every stratum split over its
    /// eligible treatments.
    fn allocate(&self, counts: &CountTable, rng: &mut dyn RngCore) -> CountTable;
}

/// Even split within each stratum. The remainder of `n_J / (|T_J|)` goes one
/// patient at a time to control, then to the arms in ascending order.
#[derive(Clone, Copy, Debug, Default)]
pub struct Stratified;

impl AllocationPolicy for Stratified {
    fn name(&self) -> &'static str {
        "stratified"
    }

    fn allocate(&self, counts: &CountTable, _rng: &mut dyn RngCore) -> CountTable {
        let mut out = counts.clone();
        let structure = counts.structure();
        for j in counts.strata() {
            let arms = structure.eligible(j);
            let k = arms.len() as u64;
            let n = counts.n(j);
            let (base, rem) = (n / k, n % k);
            let cells: Vec<(Treatment, u64)> = arms
                .iter()
                .enumerate()
                .map(|(pos, &t)| (t, base + u64::from((pos as u64) < rem)))
                .collect();
            out.set_cells(j, &cells);
        }
        out
    }
}

/// Each patient picks one of the stratum's eligible treatments uniformly.
#[derive(Clone, Copy, Debug, Default)]
pub struct RandomArrival;

impl AllocationPolicy for RandomArrival {
    fn name(&self) -> &'static str {
        "random-arrival"
    }

    fn allocate(&self, counts: &CountTable, rng: &mut dyn RngCore) -> CountTable {
        let mut out = counts.clone();
        let structure = counts.structure();
        for j in counts.strata() {
            let arms = structure.eligible(j);
            let mut tally = vec![0u64; arms.len()];
            for _ in 0..counts.n(j) {
                tally[rng.random_range(0..arms.len())] += 1;
            }
            let cells: Vec<(Treatment, u64)> = arms.into_iter().zip(tally).collect();
            out.set_cells(j, &cells);
        }
        out
    }
}

/// Patients arrive in random order. Each joins the eligible subtrial with
/// the fewest patients so far, then the smaller of that subtrial's
/// treatment and control arms. Ties are broken uniformly at random.
#[derive(Clone, Copy, Debug, Default)]
pub struct PragmaticArrival;

impl AllocationPolicy for PragmaticArrival {
    fn name(&self) -> &'static str {
        "pragmatic-arrival"
    }

    fn allocate(&self, counts: &CountTable, rng: &mut dyn RngCore) -> CountTable {
        let m = counts.m();
        let structure = counts.structure();
        let strata: Vec<_> = counts.strata().collect();

        let mut arrivals: Vec<usize> = strata
            .iter()
            .enumerate()
            .flat_map(|(k, &j)| std::iter::repeat_n(k, counts.n(j) as usize))
            .collect();
        arrivals.shuffle(rng);

        let mut subtrial_arm = vec![0u64; m];
        let mut subtrial_control = vec![0u64; m];
        // Per stratum: control count, then one slot per population's arm.
        let mut tally = vec![vec![0u64; m + 1]; strata.len()];

        let mut candidates = Vec::with_capacity(m);
        for k in arrivals {
            let j = strata[k];
            let smallest = j
                .members()
                .map(|i| subtrial_arm[i] + subtrial_control[i])
                .min()
                .expect("strata are nonempty");
            candidates.clear();
            candidates.extend(
                j.members()
                    .filter(|&i| subtrial_arm[i] + subtrial_control[i] == smallest),
            );
            let i = candidates[rng.random_range(0..candidates.len())];
            let to_arm = match subtrial_arm[i].cmp(&subtrial_control[i]) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Equal => rng.random_bool(0.5),
            };
            if to_arm {
                subtrial_arm[i] += 1;
                tally[k][i + 1] += 1;
            } else {
                subtrial_control[i] += 1;
                tally[k][0] += 1;
            }
        }

        let mut out = counts.clone();
        for (k, &j) in strata.iter().enumerate() {
            let mut cells = vec![(Treatment::Control, tally[k][0])];
            match structure {
                crate::strata::TreatmentStructure::AllDifferent => {
                    cells.extend(j.members().map(|i| (Treatment::Arm(i), tally[k][i + 1])));
                }
                crate::strata::TreatmentStructure::SingleTreatment => {
                    cells.push((Treatment::Arm(0), tally[k][1..].iter().sum()));
                }
            }
            out.set_cells(j, &cells);
        }
        out
    }
}

/// Allocates `counts` with `policy`.
pub fn allocate(counts: &CountTable, policy: &dyn AllocationPolicy, rng: &mut dyn RngCore) -> CountTable {
    policy.allocate(counts, rng)
}

/// Name-indexed set of allocation policies.
#[derive(Clone)]
pub struct AllocationRegistry {
    policies: BTreeMap<&'static str, Arc<dyn AllocationPolicy>>,
}

impl AllocationRegistry {
    pub fn empty() -> Self {
        Self {
            policies: BTreeMap::new(),
        }
    }

    /// Registry holding the three built-in policies.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Stratified);
        r.register(RandomArrival);
        r.register(PragmaticArrival);
        r
    }

    pub fn register<P: AllocationPolicy + 'static>(&mut self, policy: P) {
        self.policies.insert(policy.name(), Arc::new(policy));
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn AllocationPolicy>> {
        self.policies.get(name).cloned().ok_or_else(|| {
            Error::config(format!(
                "unknown allocation policy '{name}' (known: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.policies.keys().copied().collect()
    }
}

impl Default for AllocationRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strata::{StrataIndex, TreatmentStructure};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table(m: usize, counts: Vec<u64>) -> CountTable {
        CountTable::from_strata(m, TreatmentStructure::AllDifferent, counts).unwrap()
    }

    #[test]
    fn stratified_exact_division() {
        let t = table(2, vec![0, 0, 9]);
        let a = Stratified.allocate(&t, &mut ChaCha8Rng::seed_from_u64(0));
        let j = StrataIndex::from_members(&[1, 2], 2).unwrap();
        assert_eq!(a.n_cell(j, Treatment::Arm(0)), 3);
        assert_eq!(a.n_cell(j, Treatment::Arm(1)), 3);
        assert_eq!(a.n_cell(j, Treatment::Control), 3);
    }

    #[test]
    fn stratified_remainder_goes_to_control_first() {
        let t = table(2, vec![0, 0, 10]);
        let a = Stratified.allocate(&t, &mut ChaCha8Rng::seed_from_u64(0));
        let j = StrataIndex::from_members(&[1, 2], 2).unwrap();
        assert_eq!(a.n_cell(j, Treatment::Arm(0)), 3);
        assert_eq!(a.n_cell(j, Treatment::Arm(1)), 3);
        assert_eq!(a.n_cell(j, Treatment::Control), 4);

        let t = table(2, vec![0, 0, 11]);
        let a = Stratified.allocate(&t, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(a.n_cell(j, Treatment::Control), 4);
        assert_eq!(a.n_cell(j, Treatment::Arm(0)), 4);
        assert_eq!(a.n_cell(j, Treatment::Arm(1)), 3);
    }

    #[test]
    fn empty_stratum_allocates_nothing() {
        let t = table(2, vec![0, 5, 0]);
        for name in AllocationRegistry::standard().names() {
            let policy = AllocationRegistry::standard().get(name).unwrap();
            let a = policy.allocate(&t, &mut ChaCha8Rng::seed_from_u64(3));
            let j = StrataIndex::from_members(&[1], 2).unwrap();
            assert_eq!(a.n_cell(j, Treatment::Control), 0, "{name}");
            assert_eq!(a.n_cell(j, Treatment::Arm(0)), 0, "{name}");
            a.validate().unwrap();
        }
    }

    #[test]
    fn single_treatment_splits_in_two() {
        let t = CountTable::from_strata(2, TreatmentStructure::SingleTreatment, vec![4, 5, 7]).unwrap();
        let a = Stratified.allocate(&t, &mut ChaCha8Rng::seed_from_u64(0));
        let j = StrataIndex::from_members(&[1, 2], 2).unwrap();
        assert_eq!(a.n_cell(j, Treatment::Control), 4);
        assert_eq!(a.n_cell(j, Treatment::Arm(0)), 3);
        a.validate().unwrap();
    }

    #[test]
    fn pragmatic_balances_subtrials() {
        let t = table(2, vec![0, 0, 400]);
        let a = PragmaticArrival.allocate(&t, &mut ChaCha8Rng::seed_from_u64(11));
        let j = StrataIndex::from_members(&[1, 2], 2).unwrap();
        let t1 = a.n_cell(j, Treatment::Arm(0));
        let t2 = a.n_cell(j, Treatment::Arm(1));
        let c = a.n_cell(j, Treatment::Control);
        assert_eq!(t1 + t2 + c, 400);
        // Two subtrials of 200, each split 1:1.
        assert_eq!((t1, t2, c), (100, 100, 200));
    }

    #[test]
    fn unknown_policy_is_config_error() {
        assert!(matches!(
            AllocationRegistry::standard().get("alternating"),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn stratified_is_balanced(counts in proptest::collection::vec(0u64..200, 7)) {
            let t = table(3, counts);
            let a = Stratified.allocate(&t, &mut ChaCha8Rng::seed_from_u64(0));
            a.validate().unwrap();
            for j in a.strata() {
                let cells: Vec<u64> = TreatmentStructure::AllDifferent
                    .eligible(j).iter().map(|&tr| a.n_cell(j, tr)).collect();
                let max = *cells.iter().max().unwrap();
                let min = *cells.iter().min().unwrap();
                prop_assert!(max - min <= 1);
                prop_assert_eq!(cells[0], max);
            }
        }

        #[test]
        fn random_policies_preserve_row_sums(counts in proptest::collection::vec(0u64..60, 7), seed in any::<u64>()) {
            let t = table(3, counts);
            for policy in [&RandomArrival as &dyn AllocationPolicy, &PragmaticArrival] {
                let a = policy.allocate(&t, &mut ChaCha8Rng::seed_from_u64(seed));
                a.validate().unwrap();
            }
        }
    }
}
