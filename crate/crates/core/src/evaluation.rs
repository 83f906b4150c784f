//! Full-ranking top-N evaluation: every item outside the user's training row
//! is a candidate, and Recall/Precision/MRR@N are averaged uniformly over
//! users with at least one held-out item.

use serde::{Deserialize, Serialize};

use crate::dataset::{InteractionMatrix, SplitDataset};
use crate::error::{Error, Result};

/// Frozen scorer over all items for one user.
pub trait Ranker {
    /// Scores for every item given the user's raw (uncorrupted) input row.
    fn score(&self, user: usize, input: &[f64]) -> Result<Vec<f64>>;
}

impl<R: Ranker + ?Sized> Ranker for &R {
    fn score(&self, user: usize, input: &[f64]) -> Result<Vec<f64>> {
        (**self).score(user, input)
    }
}

impl<R: Ranker + ?Sized> Ranker for Box<R> {
    fn score(&self, user: usize, input: &[f64]) -> Result<Vec<f64>> {
        (**self).score(user, input)
    }
}

/// Scores from a fixed history matrix instead of the row it is handed.
/// Ranking still excludes the split's training items, so a model can be fed
/// noisy histories while only the genuine ones are removed from the ranking.
#[derive(Clone, Copy, Debug)]
pub struct WithHistory<'a, R> {
    pub ranker: R,
    pub history: &'a InteractionMatrix,
}

impl<R: Ranker> Ranker for WithHistory<'_, R> {
    fn score(&self, user: usize, _input: &[f64]) -> Result<Vec<f64>> {
        if user >= self.history.num_users() {
            return Err(Error::OutOfRange {
                context: "history user",
                index: user,
                len: self.history.num_users(),
            });
        }
        self.ranker.score(user, &self.history.dense_row(user))
    }
}

/// Items not in the user's training row, by descending score; ties by
/// ascending item index.
pub fn rank_items<R: Ranker + ?Sized>(ranker: &R, user: usize, split: &SplitDataset) -> Result<Vec<usize>> {
    if user >= split.num_users() {
        return Err(Error::OutOfRange {
            context: "user index",
            index: user,
            len: split.num_users(),
        });
    }
    if split.test.row(user).is_empty() {
        return Err(Error::invalid(format!("user {user} has no held-out items")));
    }
    let input = split.train.dense_row(user);
    let scores = ranker.score(user, &input)?;
    if scores.len() != split.num_items() {
        return Err(Error::dim("ranker scores", split.num_items(), scores.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("scores for user {user}")));
    }
    let train = split.train.row(user);
    let mut candidates: Vec<usize> = (0..scores.len()).filter(|i| train.binary_search(i).is_err()).collect();
    candidates.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(candidates)
}

fn hits_in_top(ranking: &[usize], test_items: &[usize], n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::invalid("cutoff must be at least 1"));
    }
    if test_items.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    Ok(ranking.iter().take(n).filter(|i| test_items.contains(i)).count())
}

pub fn recall_at(ranking: &[usize], test_items: &[usize], n: usize) -> Result<f64> {
    Ok(hits_in_top(ranking, test_items, n)? as f64 / test_items.len() as f64)
}

pub fn precision_at(ranking: &[usize], test_items: &[usize], n: usize) -> Result<f64> {
    Ok(hits_in_top(ranking, test_items, n)? as f64 / n as f64)
}

/// Reciprocal rank of the first relevant item within the top `n`, else 0.
pub fn mrr_at(ranking: &[usize], test_items: &[usize], n: usize) -> Result<f64> {
    hits_in_top(ranking, test_items, n)?;
    Ok(ranking
        .iter()
        .take(n)
        .position(|i| test_items.contains(i))
        .map_or(0.0, |p| 1.0 / (p + 1) as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Recall,
    Precision,
    Mrr,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Recall, Metric::Mrr, Metric::Precision];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Recall => "recall",
            Metric::Precision => "precision",
            Metric::Mrr => "mrr",
        }
    }

    /// Key such as `recall@5`.
    pub fn key(self, cutoff: usize) -> String {
        format!("{}@{cutoff}", self.name())
    }
}

/// User-averaged metrics for one run. Vectors are indexed like `cutoffs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cutoffs: Vec<usize>,
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    pub mrr: Vec<f64>,
    pub users_evaluated: usize,
    pub seed: Option<u64>,
}

impl MetricsReport {
    pub fn values(&self, metric: Metric) -> &[f64] {
        match metric {
            Metric::Recall => &self.recall,
            Metric::Precision => &self.precision,
            Metric::Mrr => &self.mrr,
        }
    }

    pub fn get(&self, metric: Metric, cutoff: usize) -> Option<f64> {
        let i = self.cutoffs.iter().position(|&c| c == cutoff)?;
        Some(self.values(metric)[i])
    }

    /// `(key, value)` pairs in cutoff-major order: recall, mrr, precision.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for metric in Metric::ALL {
            for (i, &c) in self.cutoffs.iter().enumerate() {
                out.push((metric.key(c), self.values(metric)[i]));
            }
        }
        out
    }
}

/// Per-metric mean and population standard deviation across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub cutoffs: Vec<usize>,
    pub mean: MetricsReport,
    pub std: MetricsReport,
    pub runs: usize,
}

pub fn evaluate<R: Ranker + ?Sized>(ranker: &R, split: &SplitDataset, cutoffs: &[usize]) -> Result<MetricsReport> {
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(Error::invalid("cutoffs must be a nonempty list of positive integers"));
    }
    let users = split.evaluable_users();
    if users.is_empty() {
        return Err(Error::invalid("no user has held-out items"));
    }
    let mut recall = vec![0.0; cutoffs.len()];
    let mut precision = vec![0.0; cutoffs.len()];
    let mut mrr = vec![0.0; cutoffs.len()];
    for &u in &users {
        let ranking = rank_items(ranker, u, split)?;
        let test = split.test.row(u);
        for (j, &n) in cutoffs.iter().enumerate() {
            recall[j] += recall_at(&ranking, test, n)?;
            precision[j] += precision_at(&ranking, test, n)?;
            mrr[j] += mrr_at(&ranking, test, n)?;
        }
    }
    let count = users.len() as f64;
    for v in recall.iter_mut().chain(&mut precision).chain(&mut mrr) {
        *v /= count;
    }
    Ok(MetricsReport {
        cutoffs: cutoffs.to_vec(),
        recall,
        precision,
        mrr,
        users_evaluated: users.len(),
        seed: None,
    })
}

pub fn aggregate_seeds(reports: &[MetricsReport]) -> Result<AggregateReport> {
    let first = reports.first().ok_or_else(|| Error::invalid("no reports to aggregate"))?;
    if reports.iter().any(|r| r.cutoffs != first.cutoffs) {
        return Err(Error::invalid("reports have different cutoffs"));
    }
    let n = reports.len() as f64;
    let stat = |metric: Metric| -> (Vec<f64>, Vec<f64>) {
        (0..first.cutoffs.len())
            .map(|j| {
                let xs: Vec<f64> = reports.iter().map(|r| r.values(metric)[j]).collect();
                let mean = xs.iter().sum::<f64>() / n;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                (mean, var.sqrt())
            })
            .unzip()
    };
    let (recall_mean, recall_std) = stat(Metric::Recall);
    let (precision_mean, precision_std) = stat(Metric::Precision);
    let (mrr_mean, mrr_std) = stat(Metric::Mrr);
    let users = first.users_evaluated;
    let build = |recall, precision, mrr| MetricsReport {
        cutoffs: first.cutoffs.clone(),
        recall,
        precision,
        mrr,
        users_evaluated: users,
        seed: None,
    };
    Ok(AggregateReport {
        cutoffs: first.cutoffs.clone(),
        mean: build(recall_mean, precision_mean, mrr_mean),
        std: build(recall_std, precision_std, mrr_std),
        runs: reports.len(),
    })
}
