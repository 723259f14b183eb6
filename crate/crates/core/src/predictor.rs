//! Interval prediction of CVSS base scores from description features.
//!
//! A random forest of axis-aligned decision trees votes on a score bin;
//! the predicted score is the winning bin's midpoint. Training is fully
//! deterministic: every tree derives its randomness from the model seed and
//! its own index, so parallel builds are schedule-independent.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CveId;
use crate::error::{Error, Result};
use crate::textfeat::{FeatureVector, Vocabulary};

const MODEL_FORMAT_VERSION: u32 = 1;

/// Partition of [0, 10] into fixed-width bins. Bins are left-closed,
/// right-open, except the last which includes 10.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBinning {
    width: f64,
}

impl Default for ScoreBinning {
    fn default() -> Self {
        ScoreBinning { width: 1.0 }
    }
}

impl ScoreBinning {
    pub fn new(width: f64) -> Result<Self> {
        if !(width > 0.0 && width <= 10.0) {
            return Err(Error::validation(format!(
                "bin width {width} must be in (0, 10]"
            )));
        }
        Ok(ScoreBinning { width })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn bin_count(&self) -> usize {
        (10.0 / self.width).ceil() as usize
    }

    /// Bin index for a score in [0, 10].
    pub fn bin_of(&self, score: f64) -> Result<usize> {
        if !(0.0..=10.0).contains(&score) {
            return Err(Error::validation(format!(
                "score {score} outside [0, 10]"
            )));
        }
        Ok(((score / self.width).floor() as usize).min(self.bin_count() - 1))
    }

    /// Midpoint of a bin; the representative score for predictions.
    pub fn midpoint(&self, bin: usize) -> f64 {
        let lo = bin as f64 * self.width;
        let hi = (lo + self.width).min(10.0);
        (lo + hi) / 2.0
    }

    /// Human-readable bounds, e.g. `[7.0, 8.0)`.
    pub fn label(&self, bin: usize) -> String {
        let lo = bin as f64 * self.width;
        let hi = (lo + self.width).min(10.0);
        if bin + 1 == self.bin_count() {
            format!("[{lo}, {hi}]")
        } else {
            format!("[{lo}, {hi})")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub tree_count: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Candidate features per split; `None` means `floor(sqrt(d))`.
    pub features_per_split: Option<usize>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            tree_count: 100,
            max_depth: 32,
            min_leaf: 2,
            features_per_split: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum TreeNode {
    Leaf { bin: u32 },
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    fn predict(&self, values: &[f64]) -> u32 {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { bin } => return bin,
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if values[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }
}

/// A trained forest plus everything needed to reproduce its predictions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<Tree>,
    binning: ScoreBinning,
    hyperparams: Hyperparams,
    seed: u64,
    dimension: usize,
    /// Present when the model was trained on TF-IDF features.
    vocabulary: Option<Vocabulary>,
    #[serde(skip)]
    train_seconds: f64,
}

/// One prediction: winning bin, its midpoint, and the vote share behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub bin: usize,
    pub score: f64,
    pub vote_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedScore {
    pub cve_id: CveId,
    pub bin: usize,
    pub score: f64,
    pub vote_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub rmse: f64,
    pub train_seconds: f64,
    pub infer_seconds: f64,
}

/// Train a forest on (feature vector, bin label) examples.
///
/// Each tree trains on a bootstrap sample of size N drawn from a stream
/// keyed by `seed` and the tree index; splits use Gini impurity over
/// `floor(sqrt(d))` candidate features.
pub fn train_forest(
    features: &[FeatureVector],
    bins: &[usize],
    binning: ScoreBinning,
    hyperparams: Hyperparams,
    vocabulary: Option<Vocabulary>,
    seed: u64,
) -> Result<ForestModel> {
    if features.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    if features.len() != bins.len() {
        return Err(Error::validation("feature/label length mismatch"));
    }
    if hyperparams.tree_count == 0 {
        return Err(Error::validation("tree_count must be at least 1"));
    }
    let dimension = features[0].dimension();
    if features.iter().any(|f| f.dimension() != dimension) {
        return Err(Error::validation("inconsistent feature dimensions"));
    }
    let bin_count = binning.bin_count();
    if let Some(&bad) = bins.iter().find(|&&b| b >= bin_count) {
        return Err(Error::validation(format!(
            "bin label {bad} outside 0..{bin_count}"
        )));
    }

    let started = Instant::now();
    let columns: Vec<&[f64]> = features.iter().map(|f| f.values()).collect();
    let trees: Vec<Tree> = (0..hyperparams.tree_count)
        .into_par_iter()
        .map(|tree_index| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(tree_index as u64 + 1);
            let sample: Vec<usize> = (0..columns.len())
                .map(|_| rng.random_range(0..columns.len()))
                .collect();
            let mut builder = TreeBuilder {
                rows: &columns,
                bins,
                hyperparams: &hyperparams,
                bin_count,
                dimension,
                rng,
                nodes: Vec::new(),
            };
            builder.build(sample, 0);
            Tree { nodes: builder.nodes }
        })
        .collect();

    Ok(ForestModel {
        trees,
        binning,
        hyperparams,
        seed,
        dimension,
        vocabulary,
        train_seconds: started.elapsed().as_secs_f64(),
    })
}

struct TreeBuilder<'a> {
    rows: &'a [&'a [f64]],
    bins: &'a [usize],
    hyperparams: &'a Hyperparams,
    bin_count: usize,
    dimension: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    fn build(&mut self, indices: Vec<usize>, depth: usize) -> u32 {
        let counts = self.class_counts(&indices);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure
            || depth >= self.hyperparams.max_depth
            || indices.len() < 2 * self.hyperparams.min_leaf
        {
            return self.push_leaf(&counts);
        }
        match self.best_split(&indices, &counts) {
            None => self.push_leaf(&counts),
            Some((feature, threshold)) => {
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                    .into_iter()
                    .partition(|&i| self.rows[i][feature] <= threshold);
                let at = self.nodes.len();
                self.nodes.push(TreeNode::Leaf { bin: 0 }); // placeholder
                let left = self.build(left_idx, depth + 1);
                let right = self.build(right_idx, depth + 1);
                self.nodes[at] = TreeNode::Split {
                    feature: feature as u32,
                    threshold,
                    left,
                    right,
                };
                at as u32
            }
        }
    }

    fn push_leaf(&mut self, counts: &[usize]) -> u32 {
        let bin = majority_bin(counts);
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { bin: bin as u32 });
        at as u32
    }

    fn class_counts(&self, indices: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.bin_count];
        for &i in indices {
            counts[self.bins[i]] += 1;
        }
        counts
    }

    /// Best (feature, threshold) by weighted Gini impurity over a sampled
    /// feature subset. Ties resolve to the lowest feature index and lowest
    /// threshold because candidates are scanned in that order.
    fn best_split(&mut self, indices: &[usize], parent_counts: &[usize]) -> Option<(usize, f64)> {
        let n = indices.len() as f64;
        let parent_impurity = gini(parent_counts, indices.len());
        let candidates = self.sample_features();
        let mut best: Option<(f64, usize, f64)> = None;

        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(indices.len());
        for feature in candidates {
            sorted.clear();
            sorted.extend(indices.iter().map(|&i| (self.rows[i][feature], self.bins[i])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut left_counts = vec![0usize; self.bin_count];
            let mut right_counts = parent_counts.to_vec();
            for i in 1..sorted.len() {
                let (prev_value, prev_bin) = sorted[i - 1];
                left_counts[prev_bin] += 1;
                right_counts[prev_bin] -= 1;
                let value = sorted[i].0;
                if value <= prev_value {
                    continue;
                }
                let n_left = i;
                let n_right = sorted.len() - i;
                if n_left < self.hyperparams.min_leaf || n_right < self.hyperparams.min_leaf {
                    continue;
                }
                let weighted = (n_left as f64 / n) * gini(&left_counts, n_left)
                    + (n_right as f64 / n) * gini(&right_counts, n_right);
                if parent_impurity - weighted <= 1e-12 {
                    continue;
                }
                let threshold = (prev_value + value) / 2.0;
                let better = match best {
                    None => true,
                    Some((best_weighted, _, _)) => weighted < best_weighted - 1e-15,
                };
                if better {
                    best = Some((weighted, feature, threshold));
                }
            }
        }
        best.map(|(_, feature, threshold)| (feature, threshold))
    }

    fn sample_features(&mut self) -> Vec<usize> {
        let k = self
            .hyperparams
            .features_per_split
            .unwrap_or_else(|| (self.dimension as f64).sqrt().floor() as usize)
            .clamp(1, self.dimension);
        let mut all: Vec<usize> = (0..self.dimension).collect();
        for i in 0..k {
            let j = self.rng.random_range(i..all.len());
            all.swap(i, j);
        }
        let mut picked: Vec<usize> = all[..k].to_vec();
        picked.sort_unstable();
        picked
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

/// Majority class; ties break toward the lower bin.
fn majority_bin(counts: &[usize]) -> usize {
    let mut best = 0usize;
    for (bin, &count) in counts.iter().enumerate() {
        if count > counts[best] {
            best = bin;
        }
    }
    best
}

impl ForestModel {
    pub fn binning(&self) -> ScoreBinning {
        self.binning
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        self.vocabulary.as_ref()
    }

    pub fn hyperparams(&self) -> Hyperparams {
        self.hyperparams
    }

    pub fn train_seconds(&self) -> f64 {
        self.train_seconds
    }

    /// Majority vote across trees; ties break toward the lower bin.
    pub fn predict(&self, vector: &FeatureVector) -> Result<Prediction> {
        if vector.dimension() != self.dimension {
            return Err(Error::validation(format!(
                "feature dimension {} does not match model dimension {}",
                vector.dimension(),
                self.dimension
            )));
        }
        let mut votes = vec![0usize; self.binning.bin_count()];
        for tree in &self.trees {
            votes[tree.predict(vector.values()) as usize] += 1;
        }
        let bin = majority_bin(&votes);
        Ok(Prediction {
            bin,
            score: self.binning.midpoint(bin),
            vote_fraction: votes[bin] as f64 / self.trees.len() as f64,
        })
    }

    pub fn predict_labeled(&self, cve_id: &CveId, vector: &FeatureVector) -> Result<PredictedScore> {
        let p = self.predict(vector)?;
        Ok(PredictedScore {
            cve_id: cve_id.clone(),
            bin: p.bin,
            score: p.score,
            vote_fraction: p.vote_fraction,
        })
    }

    /// Predict a batch, returned keyed by id.
    pub fn predict_all(
        &self,
        points: &[(CveId, FeatureVector)],
    ) -> Result<BTreeMap<CveId, PredictedScore>> {
        points
            .iter()
            .map(|(id, v)| Ok((id.clone(), self.predict_labeled(id, v)?)))
            .collect()
    }

    /// Serialize as versioned JSON. Loading a saved model reproduces
    /// predictions bit-for-bit.
    pub fn save(&self, mut w: impl Write) -> Result<()> {
        #[derive(Serialize)]
        struct File<'a> {
            version: u32,
            model: &'a ForestModel,
        }
        serde_json::to_writer(
            &mut w,
            &File {
                version: MODEL_FORMAT_VERSION,
                model: self,
            },
        )
        .map_err(|e| Error::format(e.to_string()))?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(r: impl Read) -> Result<ForestModel> {
        #[derive(Deserialize)]
        struct File {
            version: u32,
            model: ForestModel,
        }
        let file: File = serde_json::from_reader(r).map_err(|e| Error::format(e.to_string()))?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported model format version {}",
                file.version
            )));
        }
        Ok(file.model)
    }
}

/// Bin accuracy and midpoint RMSE over (vector, true score) pairs.
pub fn evaluate(model: &ForestModel, test: &[(FeatureVector, f64)]) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::validation("test set is empty"));
    }
    let started = Instant::now();
    let mut correct = 0usize;
    let mut sq_err = 0.0f64;
    for (vector, truth) in test {
        let prediction = model.predict(vector)?;
        if prediction.bin == model.binning.bin_of(*truth)? {
            correct += 1;
        }
        let err = prediction.score - truth;
        sq_err += err * err;
    }
    Ok(Metrics {
        accuracy: correct as f64 / test.len() as f64,
        rmse: (sq_err / test.len() as f64).sqrt(),
        train_seconds: model.train_seconds,
        infer_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning_edges() {
        let b = ScoreBinning::default();
        assert_eq!(b.bin_count(), 10);
        assert_eq!(b.bin_of(7.8).unwrap(), 7);
        assert_eq!(b.bin_of(10.0).unwrap(), 9);
        assert_eq!(b.bin_of(0.0).unwrap(), 0);
        assert_eq!(b.bin_of(9.0).unwrap(), 9);
        assert!(b.bin_of(10.1).is_err());
        assert!(b.bin_of(-0.1).is_err());
    }

    #[test]
    fn binning_midpoints_lie_inside() {
        let b = ScoreBinning::new(1.0).unwrap();
        for bin in 0..b.bin_count() {
            let m = b.midpoint(bin);
            assert_eq!(b.bin_of(m).unwrap(), bin);
        }
        assert_eq!(b.midpoint(7), 7.5);
    }

    #[test]
    fn binning_labels() {
        let b = ScoreBinning::default();
        assert_eq!(b.label(7), "[7, 8)");
        assert_eq!(b.label(9), "[9, 10]");
    }

    fn one_hot(dim: usize, at: usize) -> FeatureVector {
        let mut v = vec![0.0; dim];
        v[at] = 1.0;
        FeatureVector::new(v)
    }

    fn separable_training() -> (Vec<FeatureVector>, Vec<usize>) {
        // Feature 0 active => bin 9, feature 1 active => bin 0.
        let mut features = Vec::new();
        let mut bins = Vec::new();
        for i in 0..40 {
            if i % 2 == 0 {
                features.push(one_hot(4, 0));
                bins.push(9);
            } else {
                features.push(one_hot(4, 1));
                bins.push(0);
            }
        }
        (features, bins)
    }

    #[test]
    fn separable_data_trains_to_perfect_held_in_accuracy() {
        let (features, bins) = separable_training();
        let hp = Hyperparams {
            tree_count: 25,
            ..Hyperparams::default()
        };
        let model =
            train_forest(&features, &bins, ScoreBinning::default(), hp, None, 7).unwrap();
        for (v, bin) in features.iter().zip(&bins) {
            assert_eq!(model.predict(v).unwrap().bin, *bin);
        }
    }

    #[test]
    fn single_class_training_predicts_that_class() {
        let features = vec![one_hot(3, 0), one_hot(3, 1), one_hot(3, 2)];
        let bins = vec![4, 4, 4];
        let model = train_forest(
            &features,
            &bins,
            ScoreBinning::default(),
            Hyperparams { tree_count: 5, ..Hyperparams::default() },
            None,
            1,
        )
        .unwrap();
        let p = model.predict(&one_hot(3, 1)).unwrap();
        assert_eq!(p.bin, 4);
        assert_eq!(p.score, 4.5);
        assert_eq!(p.vote_fraction, 1.0);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        assert!(train_forest(
            &[],
            &[],
            ScoreBinning::default(),
            Hyperparams::default(),
            None,
            1
        )
        .is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let (features, bins) = separable_training();
        let hp = Hyperparams { tree_count: 12, ..Hyperparams::default() };
        let a = train_forest(&features, &bins, ScoreBinning::default(), hp, None, 3).unwrap();
        let b = train_forest(&features, &bins, ScoreBinning::default(), hp, None, 3).unwrap();
        assert_eq!(a.trees, b.trees);
    }

    #[test]
    fn vote_tie_breaks_toward_lower_bin() {
        assert_eq!(majority_bin(&[0, 3, 0, 3]), 1);
        assert_eq!(majority_bin(&[1, 1]), 0);
    }

    #[test]
    fn prediction_invariant_under_tree_permutation() {
        let (features, bins) = separable_training();
        let hp = Hyperparams { tree_count: 9, ..Hyperparams::default() };
        let model = train_forest(&features, &bins, ScoreBinning::default(), hp, None, 5).unwrap();
        let mut reversed = model.clone();
        reversed.trees.reverse();
        let zero = FeatureVector::new(vec![0.0; 4]);
        for v in features.iter().chain(std::iter::once(&zero)) {
            assert_eq!(model.predict(v).unwrap(), reversed.predict(v).unwrap());
        }
    }

    #[test]
    fn zero_vector_predicts_without_error() {
        let (features, bins) = separable_training();
        let model = train_forest(
            &features,
            &bins,
            ScoreBinning::default(),
            Hyperparams { tree_count: 3, ..Hyperparams::default() },
            None,
            2,
        )
        .unwrap();
        let p = model.predict(&FeatureVector::new(vec![0.0; 4])).unwrap();
        assert!(p.score >= 0.0 && p.score <= 10.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (features, bins) = separable_training();
        let model = train_forest(
            &features,
            &bins,
            ScoreBinning::default(),
            Hyperparams { tree_count: 3, ..Hyperparams::default() },
            None,
            2,
        )
        .unwrap();
        assert!(model.predict(&FeatureVector::new(vec![0.0; 5])).is_err());
    }

    #[test]
    fn model_roundtrips_with_identical_predictions() {
        let (features, bins) = separable_training();
        let model = train_forest(
            &features,
            &bins,
            ScoreBinning::default(),
            Hyperparams { tree_count: 8, ..Hyperparams::default() },
            None,
            11,
        )
        .unwrap();
        let mut buf = Vec::new();
        model.save(&mut buf).unwrap();
        let loaded = ForestModel::load(buf.as_slice()).unwrap();
        for v in &features {
            assert_eq!(model.predict(v).unwrap(), loaded.predict(v).unwrap());
        }
        let mut buf2 = Vec::new();
        loaded.save(&mut buf2).unwrap();
        assert_eq!(buf, buf2, "save/load/save is byte-stable");
    }

    #[test]
    fn evaluate_reports_bounded_rmse_for_correct_bins() {
        let (features, bins) = separable_training();
        let model = train_forest(
            &features,
            &bins,
            ScoreBinning::default(),
            Hyperparams { tree_count: 15, ..Hyperparams::default() },
            None,
            4,
        )
        .unwrap();
        let test: Vec<(FeatureVector, f64)> = features
            .iter()
            .zip(&bins)
            .map(|(v, &b)| (v.clone(), b as f64 + 0.25))
            .collect();
        let metrics = evaluate(&model, &test).unwrap();
        assert_eq!(metrics.accuracy, 1.0);
        assert!(metrics.rmse <= 0.5 + 1e-9);
    }

    #[test]
    fn constant_model_on_balanced_two_bin_test_scores_half() {
        let features = vec![one_hot(2, 0); 6];
        let bins = vec![3; 6];
        let model = train_forest(
            &features,
            &bins,
            ScoreBinning::default(),
            Hyperparams { tree_count: 3, ..Hyperparams::default() },
            None,
            1,
        )
        .unwrap();
        let test = vec![
            (one_hot(2, 0), 3.5),
            (one_hot(2, 0), 6.5),
            (one_hot(2, 1), 3.5),
            (one_hot(2, 1), 6.5),
        ];
        let metrics = evaluate(&model, &test).unwrap();
        assert_eq!(metrics.accuracy, 0.5);
    }
}
