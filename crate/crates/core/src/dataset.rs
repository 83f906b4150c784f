//! Implicit-feedback interaction matrices: loading, per-user splitting and
//! synthetic false-positive injection.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Sparse binary user × item matrix. Each row holds the user's positive item
/// indices in strictly ascending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionMatrix {
    num_users: usize,
    num_items: usize,
    rows: Vec<Vec<usize>>,
    nnz: usize,
}

impl InteractionMatrix {
    /// Builds a matrix from unsorted rows; duplicates are collapsed.
    pub fn from_rows(num_users: usize, num_items: usize, mut rows: Vec<Vec<usize>>) -> Result<Self> {
        if rows.len() != num_users {
            return Err(Error::dim("interaction rows", num_users, rows.len()));
        }
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            if let Some(&last) = row.last() {
                if last >= num_items {
                    return Err(Error::OutOfRange {
                        context: "item index",
                        index: last,
                        len: num_items,
                    });
                }
            }
        }
        let nnz = rows.iter().map(Vec::len).sum();
        Ok(Self {
            num_users,
            num_items,
            rows,
            nnz,
        })
    }

    pub fn empty(num_users: usize, num_items: usize) -> Self {
        Self {
            num_users,
            num_items,
            rows: vec![Vec::new(); num_users],
            nnz: 0,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_interactions(&self) -> usize {
        self.nnz
    }

    pub fn row(&self, user: usize) -> &[usize] {
        &self.rows[user]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.rows[user].binary_search(&item).is_ok()
    }

    /// Row `user` as a dense 0/1 vector of length `num_items`.
    pub fn dense_row(&self, user: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.num_items];
        for &i in &self.rows[user] {
            v[i] = 1.0;
        }
        v
    }

    /// `1 - n / (U·D)`.
    pub fn sparsity(&self) -> Result<f64> {
        let cells = self.num_users * self.num_items;
        if cells == 0 {
            return Err(Error::invalid("sparsity of a zero-size matrix"));
        }
        Ok(1.0 - self.nnz as f64 / cells as f64)
    }

    /// Entry-wise union of two matrices with the same shape.
    pub fn union(&self, other: &InteractionMatrix) -> Result<InteractionMatrix> {
        self.check_same_shape(other)?;
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| a.iter().chain(b).copied().collect())
            .collect();
        Self::from_rows(self.num_users, self.num_items, rows)
    }

    fn check_same_shape(&self, other: &InteractionMatrix) -> Result<()> {
        if self.num_users != other.num_users {
            return Err(Error::dim("matrix users", self.num_users, other.num_users));
        }
        if self.num_items != other.num_items {
            return Err(Error::dim("matrix items", self.num_items, other.num_items));
        }
        Ok(())
    }
}

/// Bijection between external identifiers and dense internal indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
}

impl IdMap {
    fn intern(ids: &mut Vec<String>, index: &mut HashMap<String, usize>, key: &str) -> usize {
        if let Some(&i) = index.get(key) {
            return i;
        }
        let i = ids.len();
        ids.push(key.to_owned());
        index.insert(key.to_owned(), i);
        i
    }

    pub fn user_internal(&self, external: &str) -> Option<usize> {
        self.user_index.get(external).copied()
    }

    pub fn item_internal(&self, external: &str) -> Option<usize> {
        self.item_index.get(external).copied()
    }

    pub fn user_external(&self, internal: usize) -> Option<&str> {
        self.users.get(internal).map(String::as_str)
    }

    pub fn item_external(&self, internal: usize) -> Option<&str> {
        self.items.get(internal).map(String::as_str)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Tsv,
    Csv,
}

impl Format {
    fn separator(self) -> char {
        match self {
            Format::Tsv => '\t',
            Format::Csv => ',',
        }
    }

    /// Tab if the line contains one, otherwise comma.
    pub fn detect(line: &str) -> Format {
        if line.contains('\t') {
            Format::Tsv
        } else {
            Format::Csv
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(Format::Tsv),
            "csv" => Ok(Format::Csv),
            other => Err(Error::invalid(format!("unknown format `{other}` (expected tsv or csv)"))),
        }
    }
}

/// Reads `user item [rating] [timestamp]` lines. Ratings and timestamps are
/// ignored; `#` lines and blank lines are skipped. With `format = None` the
/// separator is detected from the first data line.
pub fn load_interactions(path: &Path, format: Option<Format>) -> Result<(InteractionMatrix, IdMap)> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_interactions(BufReader::new(file), format).map_err(|e| match e {
        Error::Io { source, .. } => Error::Io {
            path: path.to_owned(),
            source,
        },
        other => other,
    })
}

pub fn parse_interactions<R: BufRead>(reader: R, format: Option<Format>) -> Result<(InteractionMatrix, IdMap)> {
    let mut ids = IdMap::default();
    let mut rows: Vec<Vec<usize>> = Vec::new();
    let mut format = format;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: Default::default(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let sep = format.get_or_insert_with(|| Format::detect(trimmed)).separator();
        let mut fields = trimmed.split(sep).map(str::trim);
        let (user, item) = match (fields.next(), fields.next()) {
            (Some(u), Some(i)) if !u.is_empty() && !i.is_empty() => (u, i),
            _ => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    reason: "expected at least two fields: user-id and item-id".into(),
                })
            }
        };
        let u = IdMap::intern(&mut ids.users, &mut ids.user_index, user);
        let i = IdMap::intern(&mut ids.items, &mut ids.item_index, item);
        if u == rows.len() {
            rows.push(Vec::new());
        }
        rows[u].push(i);
    }

    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let matrix = InteractionMatrix::from_rows(ids.num_users(), ids.num_items(), rows)?;
    Ok((matrix, ids))
}

/// Train/test pair over the same `(U, D)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitDataset {
    pub train: InteractionMatrix,
    pub test: InteractionMatrix,
}

impl SplitDataset {
    pub fn num_users(&self) -> usize {
        self.train.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.train.num_items()
    }

    /// Users with at least one held-out item.
    pub fn evaluable_users(&self) -> Vec<usize> {
        (0..self.test.num_users())
            .filter(|&u| !self.test.row(u).is_empty())
            .collect()
    }
}

/// Per-user holdout: each row is shuffled and the first `ceil(ratio·len)`
/// items go to train. Single-item rows therefore stay entirely in train.
pub fn split_train_test(m: &InteractionMatrix, ratio: f64, seed: u64) -> Result<SplitDataset> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let mut rng = Rng::new(seed);
    let mut train = Vec::with_capacity(m.num_users());
    let mut test = Vec::with_capacity(m.num_users());
    for row in m.rows() {
        let mut items = row.clone();
        rng.shuffle(&mut items);
        // the epsilon absorbs products like 0.8·10 landing a hair above 8
        let keep = ((ratio * items.len() as f64) - 1e-9).ceil() as usize;
        let held = items.split_off(keep.min(items.len()));
        train.push(items);
        test.push(held);
    }
    Ok(SplitDataset {
        train: InteractionMatrix::from_rows(m.num_users(), m.num_items(), train)?,
        test: InteractionMatrix::from_rows(m.num_users(), m.num_items(), test)?,
    })
}

/// Adds `round(rate·n)` false positives sampled uniformly from the absent cells.
pub fn inject_noise(m: &InteractionMatrix, rate: f64, seed: u64) -> Result<InteractionMatrix> {
    inject_noise_avoiding(m, None, rate, seed)
}

/// Like [`inject_noise`], but cells positive in `avoid` are never sampled
/// either. Used to keep noise on a train split off the held-out test items.
pub fn inject_noise_avoiding(
    m: &InteractionMatrix,
    avoid: Option<&InteractionMatrix>,
    rate: f64,
    seed: u64,
) -> Result<InteractionMatrix> {
    if !rate.is_finite() || rate < 0.0 {
        return Err(Error::invalid(format!("noise rate must be a finite value >= 0, got {rate}")));
    }
    let occupied = match avoid {
        Some(a) => m.union(a)?,
        None => m.clone(),
    };
    let requested = (rate * m.num_interactions() as f64).round() as usize;
    let available = m.num_users() * m.num_items() - occupied.num_interactions();
    if requested > available {
        return Err(Error::NoiseExhausted { requested, available });
    }
    if requested == 0 {
        return Ok(m.clone());
    }

    let mut rng = Rng::new(seed);
    let mut rows = m.rows().to_vec();
    if requested * 2 <= available {
        // rejection sampling is uniform over the absent cells and cheap while
        // at least half of them remain eligible
        let mut added: HashSet<(usize, usize)> = HashSet::with_capacity(requested);
        while added.len() < requested {
            let u = rng.below(m.num_users());
            let i = rng.below(m.num_items());
            if !occupied.contains(u, i) && added.insert((u, i)) {
                rows[u].push(i);
            }
        }
    } else {
        let mut absent: Vec<(usize, usize)> = (0..m.num_users())
            .flat_map(|u| {
                let occupied = &occupied;
                (0..m.num_items())
                    .filter(move |&i| !occupied.contains(u, i))
                    .map(move |i| (u, i))
            })
            .collect();
        for k in 0..requested {
            let j = k + rng.below(absent.len() - k);
            absent.swap(k, j);
            let (u, i) = absent[k];
            rows[u].push(i);
        }
    }
    InteractionMatrix::from_rows(m.num_users(), m.num_items(), rows)
}

/// Seeded clustered dataset for smoke runs and tests. Items are split into
/// taste clusters; each user favours one cluster and occasionally strays.
/// Every user gets at least `min(5, num_items)` positives.
pub fn synthetic(num_users: usize, num_items: usize, seed: u64) -> Result<InteractionMatrix> {
    if num_users == 0 || num_items == 0 {
        return Err(Error::invalid("synthetic dataset needs at least one user and one item"));
    }
    let clusters = (num_items / 10).clamp(2, 8).min(num_items);
    let mut rng = Rng::new(seed);
    let min_items = 5.min(num_items);
    let rows = (0..num_users)
        .map(|_| {
            let home = rng.below(clusters);
            let mut row: Vec<usize> = (0..num_items)
                .filter(|&i| {
                    // a popularity tilt toward low item ids inside each cluster
                    let p = if i % clusters == home {
                        0.65 - 0.3 * (i as f64 / num_items as f64)
                    } else {
                        0.03
                    };
                    rng.unit() < p
                })
                .collect();
            while row.len() < min_items {
                let i = rng.below(num_items);
                if !row.contains(&i) {
                    row.push(i);
                }
            }
            row
        })
        .collect();
    InteractionMatrix::from_rows(num_users, num_items, rows)
}
