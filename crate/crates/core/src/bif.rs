//! The BIF structure: the bag label generates instance labels through a
//! clamped tabular conditional, and each instance label generates its
//! feature vector through a per-class density.
//!
//! `P(I = i | B = b)` is exactly zero for every incompatible `(i, b)` pair,
//! so labellings drawn from the model are always compatible with their bag
//! label. Estimation pools instance counts across bags and adds a
//! pseudo-count of one for each compatible label (none for incompatible
//! ones). All scoring runs in log space.

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Bag, Dataset};
use crate::density::{DensityKind, DensityModel};
use crate::error::{MilError, Result};
use crate::labels::{is_compatible, Label, LabelDomain, NORMAL};
use crate::Inference;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BifParams {
    domain: LabelDomain,
    /// `P(B)`, indexed by label − 1.
    bag_prior: Vec<f64>,
    /// `P(I = i | B = b)` as `instance_table[b − 1][i − 1]`.
    instance_table: Vec<Vec<f64>>,
    /// `P(F | I = i)`, one fitted density per instance label.
    class_densities: Vec<DensityModel>,
}

impl BifParams {
    /// Assembles a model from explicit parameters, validating the
    /// distribution and compatibility-clamping invariants.
    pub fn new(
        domain: LabelDomain,
        bag_prior: Vec<f64>,
        instance_table: Vec<Vec<f64>>,
        class_densities: Vec<DensityModel>,
    ) -> Result<Self> {
        let t = domain.size();
        if bag_prior.len() != t {
            return Err(MilError::DimensionMismatch {
                context: "bag prior".into(),
                expected: t,
                got: bag_prior.len(),
            });
        }
        if bag_prior.iter().any(|&x| !(x >= 0.0)) {
            return Err(MilError::InvalidInput("bag prior has negative entries".into()));
        }
        let sum: f64 = bag_prior.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(MilError::InvalidInput(format!(
                "bag prior sums to {sum}, expected 1"
            )));
        }
        if instance_table.len() != t || instance_table.iter().any(|r| r.len() != t) {
            return Err(MilError::DimensionMismatch {
                context: "instance table".into(),
                expected: t,
                got: instance_table.len(),
            });
        }
        for b in domain.labels() {
            let row = &instance_table[domain.index_of(b)];
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(MilError::InvalidInput(format!(
                    "instance table row for bag label {b} sums to {sum}, expected 1"
                )));
            }
            for i in domain.labels() {
                let value = row[domain.index_of(i)];
                if !(value >= 0.0) {
                    return Err(MilError::InvalidInput(format!(
                        "P(I={i}|B={b}) = {value} is negative"
                    )));
                }
                if !is_compatible(i, b, domain)? && value != 0.0 {
                    return Err(MilError::InvalidInput(format!(
                        "P(I={i}|B={b}) = {value} must be exactly 0 (incompatible pair)"
                    )));
                }
            }
        }
        if class_densities.len() != t {
            return Err(MilError::DimensionMismatch {
                context: "class densities".into(),
                expected: t,
                got: class_densities.len(),
            });
        }
        let p = class_densities[0].dim();
        if class_densities.iter().any(|d| d.dim() != p) {
            return Err(MilError::InvalidInput(
                "class densities disagree on feature dimension".into(),
            ));
        }
        Ok(BifParams {
            domain,
            bag_prior,
            instance_table,
            class_densities,
        })
    }

    /// Estimates all parameters from a dataset whose bags carry bag labels
    /// and (working or gold) instance labels.
    ///
    /// `P(B)` comes from bag-label frequencies (no pseudo-counts); the
    /// instance table rows come from pooled counts plus one pseudo-count per
    /// compatible label; the class densities are fitted on instances pooled
    /// by latent label.
    pub fn estimate(dataset: &Dataset, density: DensityKind) -> Result<Self> {
        let domain = dataset.domain();
        let t = domain.size();

        let mut bag_counts = vec![0usize; t];
        let mut joint_counts = vec![vec![0usize; t]; t];
        let mut by_class: Vec<Vec<&[f64]>> = vec![Vec::new(); t];
        for bag in dataset.bags() {
            let b = bag.bag_label().ok_or_else(|| {
                MilError::InvalidState(format!("bag '{}' has no bag label", bag.id()))
            })?;
            let labels = bag.latent_labels().ok_or_else(|| {
                MilError::InvalidState(format!("bag '{}' has no instance labels", bag.id()))
            })?;
            bag_counts[domain.index_of(b)] += 1;
            for (&i, f) in labels.iter().zip(bag.instances()) {
                if !is_compatible(i, b, domain)? {
                    return Err(MilError::InvalidState(format!(
                        "bag '{}' holds instance label {i}, incompatible with bag label {b}",
                        bag.id()
                    )));
                }
                joint_counts[domain.index_of(b)][domain.index_of(i)] += 1;
                by_class[domain.index_of(i)].push(f);
            }
        }

        let n = dataset.len() as f64;
        let bag_prior: Vec<f64> = bag_counts.iter().map(|&c| c as f64 / n).collect();

        let mut instance_table = vec![vec![0.0; t]; t];
        for b in domain.labels() {
            let bi = domain.index_of(b);
            let mut row_total = 0.0;
            for i in domain.labels() {
                let ii = domain.index_of(i);
                if is_compatible(i, b, domain)? {
                    instance_table[bi][ii] = joint_counts[bi][ii] as f64 + 1.0;
                    row_total += instance_table[bi][ii];
                }
            }
            for cell in &mut instance_table[bi] {
                *cell /= row_total;
            }
        }

        let mut class_densities = Vec::with_capacity(t);
        for i in domain.labels() {
            let rows = &by_class[domain.index_of(i)];
            if rows.len() < density.min_samples() {
                return Err(MilError::InsufficientData {
                    context: format!("density for instance class {i}"),
                    got: rows.len(),
                    need: density.min_samples(),
                });
            }
            class_densities.push(DensityModel::fit(density, rows)?);
        }

        BifParams::new(domain, bag_prior, instance_table, class_densities)
    }

    pub fn domain(&self) -> LabelDomain {
        self.domain
    }

    pub fn bag_prior(&self) -> &[f64] {
        &self.bag_prior
    }

    pub fn instance_table(&self) -> &[Vec<f64>] {
        &self.instance_table
    }

    pub fn class_densities(&self) -> &[DensityModel] {
        &self.class_densities
    }

    pub fn dim(&self) -> usize {
        self.class_densities[0].dim()
    }

    fn log_table(&self, b: Label, i: Label) -> f64 {
        self.instance_table[self.domain.index_of(b)][self.domain.index_of(i)].ln()
    }

    /// Most likely instance labels for a bag with a known bag label: each
    /// instance is maximized independently over `log P(i|b) + log P(f|i)`,
    /// ties toward the lower label. Incompatible labels are excluded by the
    /// zero table entries.
    pub fn e_step(&self, bag: &Bag) -> Result<Vec<Label>> {
        let b = bag.bag_label().ok_or_else(|| {
            MilError::InvalidState(format!("bag '{}' has no bag label", bag.id()))
        })?;
        self.domain.check(b)?;
        Ok(bag
            .instances()
            .iter()
            .map(|f| {
                let mut best = NORMAL;
                let mut best_score = f64::NEG_INFINITY;
                for i in self.domain.labels() {
                    let table = self.log_table(b, i);
                    if table == f64::NEG_INFINITY {
                        continue;
                    }
                    let score = table + self.class_density(i).log_pdf(f);
                    if score > best_score {
                        best_score = score;
                        best = i;
                    }
                }
                best
            })
            .collect())
    }

    fn class_density(&self, i: Label) -> &DensityModel {
        &self.class_densities[self.domain.index_of(i)]
    }

    /// Joint MAP bag and instance labels for an unlabeled bag: each
    /// candidate bag label is scored as `log P(b)` plus the per-instance
    /// maxima, and the best candidate wins (ties toward the lower label).
    pub fn infer(&self, instances: &[Vec<f64>]) -> Inference {
        let t = self.domain.size();
        // per-instance log densities, shared across candidates
        let log_pdf: Vec<Vec<f64>> = instances
            .iter()
            .map(|f| {
                self.domain
                    .labels()
                    .map(|i| self.class_density(i).log_pdf(f))
                    .collect()
            })
            .collect();

        let mut label_scores = Vec::with_capacity(t);
        for b in self.domain.labels() {
            let mut score = self.bag_prior[self.domain.index_of(b)].ln();
            if score > f64::NEG_INFINITY {
                for row in &log_pdf {
                    let best = self
                        .domain
                        .labels()
                        .map(|i| self.log_table(b, i) + row[self.domain.index_of(i)])
                        .fold(f64::NEG_INFINITY, f64::max);
                    score += best;
                }
            }
            label_scores.push(score);
        }

        let mut bag_label = NORMAL;
        let mut best = f64::NEG_INFINITY;
        for b in self.domain.labels() {
            let score = label_scores[self.domain.index_of(b)];
            if score > best {
                best = score;
                bag_label = b;
            }
        }

        let instance_labels = log_pdf
            .iter()
            .map(|row| {
                let mut label = NORMAL;
                let mut label_best = f64::NEG_INFINITY;
                for i in self.domain.labels() {
                    let s = self.log_table(bag_label, i) + row[self.domain.index_of(i)];
                    if s > label_best {
                        label_best = s;
                        label = i;
                    }
                }
                label
            })
            .collect();

        Inference {
            bag_label,
            instance_labels,
            label_scores,
        }
    }

    /// Hard-assignment log-likelihood of a labeled dataset:
    /// `Σ_bags [log P(b) + Σ_j (log P(i_j|b) + log P(f_j|i_j))]`.
    ///
    /// A zero-probability configuration yields `−∞` rather than an error.
    pub fn log_likelihood(&self, dataset: &Dataset) -> Result<f64> {
        let mut total = 0.0;
        for bag in dataset.bags() {
            let b = bag.bag_label().ok_or_else(|| {
                MilError::InvalidState(format!("bag '{}' has no bag label", bag.id()))
            })?;
            let labels = bag.latent_labels().ok_or_else(|| {
                MilError::InvalidState(format!("bag '{}' has no instance labels", bag.id()))
            })?;
            total += self.bag_prior[self.domain.index_of(b)].ln();
            for (&i, f) in labels.iter().zip(bag.instances()) {
                total += self.log_table(b, i) + self.class_density(i).log_pdf(f);
            }
        }
        Ok(total)
    }

    /// Samples a dataset from the model: `b ~ P(B)`, bag size from
    /// `size_sampler`, `i_j ~ P(I|b)`, `f_j ~ P(F|i_j)`. The generated
    /// labels are stored as gold latent labels.
    pub fn sample<R, S>(&self, bag_count: usize, mut size_sampler: S, rng: &mut R) -> Result<Dataset>
    where
        R: Rng + ?Sized,
        S: FnMut(&mut R) -> usize,
    {
        if bag_count == 0 {
            return Err(MilError::InvalidInput("bag_count must be at least 1".into()));
        }
        let prior = WeightedIndex::new(&self.bag_prior)
            .map_err(|e| MilError::InvalidState(format!("bag prior not samplable: {e}")))?;
        let rows: Vec<WeightedIndex<f64>> = self
            .instance_table
            .iter()
            .map(|row| {
                WeightedIndex::new(row)
                    .map_err(|e| MilError::InvalidState(format!("instance table row not samplable: {e}")))
            })
            .collect::<Result<_>>()?;

        let mut bags = Vec::with_capacity(bag_count);
        for idx in 0..bag_count {
            let b = self.domain.label_at(prior.sample(rng));
            let m = size_sampler(rng).max(1);
            let mut labels = Vec::with_capacity(m);
            let mut instances = Vec::with_capacity(m);
            for _ in 0..m {
                let i = self.domain.label_at(rows[self.domain.index_of(b)].sample(rng));
                let f = self.class_density(i).sample(1, rng).pop().expect("one draw");
                labels.push(i);
                instances.push(f);
            }
            bags.push(
                Bag::new(format!("bag_{}", idx + 1), Some(b), instances)?
                    .with_latent_labels(labels)?,
            );
        }
        Dataset::new(self.domain, bags)
    }

    /// Seeded convenience wrapper around [`BifParams::sample`] with bag
    /// sizes uniform over `size_range` (inclusive).
    pub fn sample_seeded(
        &self,
        bag_count: usize,
        size_range: (usize, usize),
        seed: u64,
    ) -> Result<Dataset> {
        let (lo, hi) = size_range;
        if lo < 1 || lo > hi {
            return Err(MilError::InvalidInput(format!(
                "invalid bag size range [{lo}, {hi}]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample(bag_count, |r: &mut ChaCha8Rng| r.gen_range(lo..=hi), &mut rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::GaussianParams;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn gaussian_1d(mean: f64, var: f64) -> DensityModel {
        DensityModel::Gaussian(
            GaussianParams::new(
                DVector::from_vec(vec![mean]),
                DMatrix::from_vec(1, 1, vec![var]),
                false,
            )
            .unwrap(),
        )
    }

    fn three_class_model() -> BifParams {
        BifParams::new(
            LabelDomain::new(3).unwrap(),
            vec![0.5, 0.25, 0.25],
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.4, 0.6, 0.0],
                vec![0.3, 0.0, 0.7],
            ],
            vec![gaussian_1d(0.0, 1.0), gaussian_1d(6.0, 1.0), gaussian_1d(-6.0, 1.0)],
        )
        .unwrap()
    }

    fn labeled_dataset() -> Dataset {
        let domain = LabelDomain::new(3).unwrap();
        let bags = vec![
            Bag::new("a", Some(1), vec![vec![0.1], vec![-0.2]])
                .unwrap()
                .with_latent_labels(vec![1, 1])
                .unwrap(),
            Bag::new("b", Some(1), vec![vec![0.3]])
                .unwrap()
                .with_latent_labels(vec![1])
                .unwrap(),
            Bag::new("c", Some(2), vec![vec![6.1], vec![0.0], vec![5.9]])
                .unwrap()
                .with_latent_labels(vec![2, 1, 2])
                .unwrap(),
            Bag::new("d", Some(3), vec![vec![-6.2], vec![-5.8]])
                .unwrap()
                .with_latent_labels(vec![3, 3])
                .unwrap(),
        ];
        Dataset::new(domain, bags).unwrap()
    }

    #[test]
    fn new_rejects_unclamped_tables() {
        let domain = LabelDomain::new(2).unwrap();
        let densities = vec![gaussian_1d(0.0, 1.0), gaussian_1d(1.0, 1.0)];
        let err = BifParams::new(
            domain,
            vec![0.5, 0.5],
            vec![vec![0.9, 0.1], vec![0.5, 0.5]],
            densities,
        );
        assert!(matches!(err, Err(MilError::InvalidInput(_))));
    }

    #[test]
    fn estimate_applies_compatible_pseudo_counts() {
        // bag labels {1, 1, 2, 3}; under B=2 pooled counts are i=1: 1, i=2: 2
        let params = BifParams::estimate(&labeled_dataset(), DensityKind::GaussianDiag).unwrap();
        assert_relative_eq!(params.bag_prior()[0], 0.5);
        assert_relative_eq!(params.bag_prior()[1], 0.25);
        assert_relative_eq!(params.bag_prior()[2], 0.25);

        let row = &params.instance_table()[1];
        assert_relative_eq!(row[0], 2.0 / 5.0); // (1 + 1) / (3 + 2)
        assert_relative_eq!(row[1], 3.0 / 5.0); // (2 + 1) / (3 + 2)
        assert_eq!(row[2], 0.0);

        // only label 1 is compatible with b = 1
        assert_relative_eq!(params.instance_table()[0][0], 1.0);
        assert_eq!(params.instance_table()[0][1], 0.0);
        assert_eq!(params.instance_table()[0][2], 0.0);
    }

    #[test]
    fn estimate_matches_the_documented_count_example() {
        // pooled counts under B=2 of {i=1: 4, i=2: 6} → (5/12, 7/12, 0)
        let domain = LabelDomain::new(3).unwrap();
        let instances: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels: Vec<Label> = (0..10).map(|i| if i < 4 { 1 } else { 2 }).collect();
        let bags = vec![
            Bag::new("x", Some(2), instances).unwrap().with_latent_labels(labels).unwrap(),
            Bag::new("y", Some(1), vec![vec![0.0], vec![1.0]])
                .unwrap()
                .with_latent_labels(vec![1, 1])
                .unwrap(),
            Bag::new("z", Some(3), vec![vec![2.0], vec![3.0]])
                .unwrap()
                .with_latent_labels(vec![3, 3])
                .unwrap(),
        ];
        let ds = Dataset::new(domain, bags).unwrap();
        let params = BifParams::estimate(&ds, DensityKind::GaussianDiag).unwrap();
        let row = &params.instance_table()[1];
        assert_relative_eq!(row[0], 5.0 / 12.0);
        assert_relative_eq!(row[1], 7.0 / 12.0);
        assert_eq!(row[2], 0.0);
    }

    #[test]
    fn estimate_rejects_incompatible_latent_labels() {
        let domain = LabelDomain::new(3).unwrap();
        let bags = vec![
            Bag::new("a", Some(2), vec![vec![0.0], vec![1.0]])
                .unwrap()
                .with_latent_labels(vec![3, 2])
                .unwrap(),
            Bag::new("b", Some(1), vec![vec![0.0], vec![1.0]])
                .unwrap()
                .with_latent_labels(vec![1, 1])
                .unwrap(),
        ];
        let ds = Dataset::new(domain, bags).unwrap();
        assert!(matches!(
            BifParams::estimate(&ds, DensityKind::GaussianDiag),
            Err(MilError::InvalidState(_))
        ));
    }

    #[test]
    fn estimate_names_the_class_with_too_few_instances() {
        let domain = LabelDomain::new(2).unwrap();
        let bags = vec![
            Bag::new("a", Some(1), vec![vec![0.0], vec![1.0]])
                .unwrap()
                .with_latent_labels(vec![1, 1])
                .unwrap(),
            Bag::new("b", Some(2), vec![vec![5.0]])
                .unwrap()
                .with_latent_labels(vec![2])
                .unwrap(),
        ];
        let ds = Dataset::new(domain, bags).unwrap();
        match BifParams::estimate(&ds, DensityKind::Gaussian) {
            Err(MilError::InsufficientData { context, got, need }) => {
                assert!(context.contains("class 2"), "context: {context}");
                assert_eq!(got, 1);
                assert_eq!(need, 2);
            }
            other => panic!("expected insufficient-data error, got {other:?}"),
        }
    }

    #[test]
    fn e_step_forces_all_normal_for_normal_bags() {
        let params = three_class_model();
        let bag = Bag::new("q", Some(1), vec![vec![6.0], vec![-6.0], vec![0.0]]).unwrap();
        assert_eq!(params.e_step(&bag).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn e_step_follows_the_table_when_densities_are_identical() {
        let domain = LabelDomain::new(2).unwrap();
        let params = BifParams::new(
            domain,
            vec![0.5, 0.5],
            vec![vec![1.0, 0.0], vec![0.3, 0.7]],
            vec![gaussian_1d(0.0, 1.0), gaussian_1d(0.0, 1.0)],
        )
        .unwrap();
        let bag = Bag::new("q", Some(2), vec![vec![0.4], vec![-1.0]]).unwrap();
        // identical densities cancel; the table row picks label 2 everywhere
        assert_eq!(params.e_step(&bag).unwrap(), vec![2, 2]);
    }

    #[test]
    fn infer_with_degenerate_prior_always_returns_the_forced_label() {
        let domain = LabelDomain::new(3).unwrap();
        let params = BifParams::new(
            domain,
            vec![1.0, 0.0, 0.0],
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.4, 0.6, 0.0],
                vec![0.4, 0.0, 0.6],
            ],
            vec![gaussian_1d(0.0, 1.0), gaussian_1d(6.0, 1.0), gaussian_1d(-6.0, 1.0)],
        )
        .unwrap();
        for f in [vec![vec![6.0]], vec![vec![-6.0]], vec![vec![0.0], vec![6.0]]] {
            assert_eq!(params.infer(&f).bag_label, 1);
        }
    }

    #[test]
    fn infer_recovers_well_separated_classes() {
        let params = three_class_model();
        let out = params.infer(&[vec![6.2], vec![0.1], vec![5.8]]);
        assert_eq!(out.bag_label, 2);
        assert_eq!(out.instance_labels, vec![2, 1, 2]);
        assert_eq!(out.label_scores.len(), 3);
    }

    #[test]
    fn loglik_decomposes_for_a_single_normal_bag() {
        let params = three_class_model();
        let domain = params.domain();
        let bag = Bag::new("one", Some(1), vec![vec![0.5]])
            .unwrap()
            .with_latent_labels(vec![1])
            .unwrap();
        let ds = Dataset::new(domain, vec![bag]).unwrap();
        let expected = 0.5f64.ln() + params.class_densities()[0].log_pdf(&[0.5]);
        assert_relative_eq!(params.log_likelihood(&ds).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn loglik_is_permutation_invariant_and_minus_inf_on_zero_prior() {
        let params = three_class_model();
        let ds = labeled_dataset();
        let base = params.log_likelihood(&ds).unwrap();

        let mut bags: Vec<Bag> = ds.bags().to_vec();
        bags.reverse();
        let reversed = Dataset::new(ds.domain(), bags).unwrap();
        assert_relative_eq!(params.log_likelihood(&reversed).unwrap(), base, epsilon = 1e-12);

        let zero_prior = BifParams::new(
            params.domain(),
            vec![1.0, 0.0, 0.0],
            params.instance_table().to_vec(),
            params.class_densities().to_vec(),
        )
        .unwrap();
        assert_eq!(zero_prior.log_likelihood(&ds).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn sampling_respects_a_deterministic_table() {
        let domain = LabelDomain::new(2).unwrap();
        let params = BifParams::new(
            domain,
            vec![0.5, 0.5],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![gaussian_1d(0.0, 1.0), gaussian_1d(5.0, 1.0)],
        )
        .unwrap();
        let ds = params.sample_seeded(50, (2, 5), 9).unwrap();
        for bag in ds.bags() {
            let b = bag.bag_label().unwrap();
            for &i in bag.latent_labels().unwrap() {
                assert_eq!(i, b);
            }
        }
    }

    #[test]
    fn sampling_produces_compatible_labels_and_sizes_in_range() {
        let params = three_class_model();
        let ds = params.sample_seeded(200, (15, 25), 33).unwrap();
        assert_eq!(ds.len(), 200);
        for bag in ds.bags() {
            assert!((15..=25).contains(&bag.len()));
            let b = bag.bag_label().unwrap();
            for &i in bag.latent_labels().unwrap() {
                assert!(is_compatible(i, b, params.domain()).unwrap());
            }
        }
    }
}
