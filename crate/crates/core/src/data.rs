//! Partial top-m orderings, dataset ingestion and observed summary statistics.
//!
//! An ordering lists the `n_s` most preferred items of a unit, best first.
//! Items not listed are ranked below every listed item, with no order among
//! themselves. A length `K-1` ordering is a complete ranking.
//!
//! Two indicator families drive the likelihood computations and are exposed
//! as accessors rather than stored:
//!
//! - `is_ranked(i)`: item `i` appears in the ordering (`u_si`).
//! - `in_choice_set(t, i)`: item `i` is still available at stage `t`, i.e.
//!   it is not among the first `t` chosen items (`delta_sti`, stage 0-based).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartialOrdering {
    items: Vec<usize>,
}

impl PartialOrdering {
    /// Validate a top-m ordering of 0-based item indices over `k` items.
    pub fn new(items: Vec<usize>, k: usize) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidOrdering("empty ordering".into()));
        }
        if items.len() > k.saturating_sub(1) {
            return Err(Error::InvalidOrdering(format!(
                "{} ranked items but at most K-1 = {} allowed",
                items.len(),
                k.saturating_sub(1)
            )));
        }
        let mut seen = vec![false; k];
        for &item in &items {
            if item >= k {
                return Err(Error::InvalidOrdering(format!(
                    "item {} out of range 1..={k}",
                    item + 1
                )));
            }
            if std::mem::replace(&mut seen[item], true) {
                return Err(Error::InvalidOrdering(format!("duplicate item {}", item + 1)));
            }
        }
        Ok(Self { items })
    }

    pub(crate) fn from_vec_unchecked(items: Vec<usize>) -> Self {
        Self { items }
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    /// Number of ranked items, `n_s`.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// The most preferred item.
    pub fn top(&self) -> usize {
        self.items[0]
    }

    pub fn position(&self, item: usize) -> Option<usize> {
        self.items.iter().position(|&x| x == item)
    }

    pub fn is_ranked(&self, item: usize) -> bool {
        self.items.contains(&item)
    }

    /// Whether `item` is still available at 0-based `stage`.
    pub fn in_choice_set(&self, stage: usize, item: usize) -> bool {
        !self.items[..stage.min(self.items.len())].contains(&item)
    }

    /// Number of stages in which `item` is available: its position + 1 when
    /// ranked, every stage otherwise.
    pub fn exposure(&self, item: usize) -> usize {
        self.position(item).map_or(self.items.len(), |p| p + 1)
    }

    pub fn is_full(&self, k: usize) -> bool {
        self.items.len() + 1 == k
    }

    /// The top-`m` prefix of this ordering.
    pub fn truncated(&self, m: usize) -> Self {
        Self {
            items: self.items[..m.min(self.items.len())].to_vec(),
        }
    }
}

/// Counts restricted to the orderings of one length.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StratumStats {
    pub count: usize,
    pub top1: Vec<u64>,
    pub pairs: Vec<Vec<u64>>,
    pub pair_totals: Vec<Vec<u64>>,
}

/// Observed summaries: `top1[i]` counts units ranking `i` first, `pairs[i][j]`
/// counts units preferring `i` to `j`, `pair_totals[i][j]` is
/// `pairs[i][j] + pairs[j][i]`. `by_length` is keyed by ordering length m.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryStats {
    pub top1: Vec<u64>,
    pub pairs: Vec<Vec<u64>>,
    pub pair_totals: Vec<Vec<u64>>,
    pub by_length: BTreeMap<usize, StratumStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankingDataset {
    k: usize,
    orderings: Vec<PartialOrdering>,
    item_labels: Option<Vec<String>>,
    stage_offsets: Vec<usize>,
}

impl RankingDataset {
    pub fn new(k: usize, orderings: Vec<PartialOrdering>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidDataset(format!("K = {k}, need K >= 2")));
        }
        if orderings.is_empty() {
            return Err(Error::InvalidDataset("no orderings".into()));
        }
        for (s, o) in orderings.iter().enumerate() {
            if o.is_empty() || o.len() >= k || o.items().iter().any(|&i| i >= k) {
                return Err(Error::InvalidDataset(format!(
                    "ordering {} inconsistent with K = {k}",
                    s + 1
                )));
            }
        }
        let mut stage_offsets = Vec::with_capacity(orderings.len() + 1);
        let mut acc = 0;
        stage_offsets.push(0);
        for o in &orderings {
            acc += o.len();
            stage_offsets.push(acc);
        }
        Ok(Self {
            k,
            orderings,
            item_labels: None,
            stage_offsets,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.k {
            return Err(Error::InvalidDataset(format!(
                "{} item labels for K = {}",
                labels.len(),
                self.k
            )));
        }
        self.item_labels = Some(labels);
        Ok(self)
    }

    /// Parse ragged CSV: one unit per row, 1-based item indices, most
    /// preferred first. `#` lines are comments; `# K=<int>` and
    /// `# labels=a,b,...` are recognised as headers. A row listing all K
    /// items is truncated to its first K-1 entries.
    pub fn parse(text: &str, k: Option<usize>) -> Result<Self> {
        let mut header_k = None;
        let mut labels = None;
        let mut rows: Vec<(usize, Vec<usize>)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = strip_key(comment, "K") {
                    let parsed = v.trim().parse::<usize>().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("bad K header {v:?}"),
                    })?;
                    header_k = Some(parsed);
                } else if let Some(v) = strip_key(comment, "labels") {
                    labels = Some(v.split(',').map(|s| s.trim().to_string()).collect());
                }
                continue;
            }
            let mut items = Vec::new();
            for field in line.split(',') {
                let field = field.trim();
                if field.is_empty() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "empty entry".into(),
                    });
                }
                let v = field.parse::<usize>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("not an item index: {field:?}"),
                })?;
                items.push(v);
            }
            rows.push((line_no, items));
        }

        let k = match (k, header_k) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::InvalidDataset(format!(
                    "K = {a} given but file header says K = {b}"
                )))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => {
                return Err(Error::InvalidDataset(
                    "item count K not given and no `# K=` header".into(),
                ))
            }
        };
        if k < 2 {
            return Err(Error::InvalidDataset(format!("K = {k}, need K >= 2")));
        }

        let mut orderings = Vec::with_capacity(rows.len());
        for (line, items) in rows {
            if items.len() > k {
                return Err(Error::Parse {
                    line,
                    message: format!("{} entries but K = {k}", items.len()),
                });
            }
            let mut zero_based = Vec::with_capacity(items.len());
            for v in items {
                if v == 0 || v > k {
                    return Err(Error::Parse {
                        line,
                        message: format!("item {v} out of range 1..={k}"),
                    });
                }
                if zero_based.contains(&(v - 1)) {
                    return Err(Error::Parse {
                        line,
                        message: format!("duplicate item {v}"),
                    });
                }
                zero_based.push(v - 1);
            }
            // last position of a complete ranking is implied
            zero_based.truncate(k - 1);
            let ordering = PartialOrdering::new(zero_based, k).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            orderings.push(ordering);
        }

        let ds = Self::new(k, orderings)?;
        match labels {
            Some(l) => ds.with_labels(l),
            None => Ok(ds),
        }
    }

    /// Serialize back to the ragged CSV format read by [`RankingDataset::parse`].
    pub fn to_csv(&self) -> String {
        let mut out = format!("# K={}\n", self.k);
        if let Some(labels) = &self.item_labels {
            let _ = writeln!(out, "# labels={}", labels.join(","));
        }
        for o in &self.orderings {
            let row: Vec<String> = o.items().iter().map(|i| (i + 1).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn n_items(&self) -> usize {
        self.k
    }

    pub fn n_units(&self) -> usize {
        self.orderings.len()
    }

    pub fn orderings(&self) -> &[PartialOrdering] {
        &self.orderings
    }

    pub fn ordering(&self, s: usize) -> &PartialOrdering {
        &self.orderings[s]
    }

    pub fn item_labels(&self) -> Option<&[String]> {
        self.item_labels.as_deref()
    }

    /// Ordering lengths `n_s`.
    pub fn lengths(&self) -> Vec<usize> {
        self.orderings.iter().map(PartialOrdering::len).collect()
    }

    /// Offset of unit `s` in a flat per-stage array of length `total_stages()`.
    pub fn stage_offset(&self, s: usize) -> usize {
        self.stage_offsets[s]
    }

    pub fn total_stages(&self) -> usize {
        self.stage_offsets[self.orderings.len()]
    }

    /// Number of units per ordering length.
    pub fn strata(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for o in &self.orderings {
            *out.entry(o.len()).or_insert(0) += 1;
        }
        out
    }

    pub fn top1_frequencies(&self) -> Vec<u64> {
        top1_of(self.k, self.orderings.iter())
    }

    /// `out[i][j]`: number of units preferring item `i` to item `j`. A ranked
    /// item beats every unranked one; two unranked items are not compared.
    pub fn paired_comparisons(&self) -> Vec<Vec<u64>> {
        pairs_of(self.k, self.orderings.iter())
    }

    /// Summaries restricted to each ordering length present in the data.
    pub fn conditional_summaries(&self) -> BTreeMap<usize, StratumStats> {
        let mut groups: BTreeMap<usize, Vec<&PartialOrdering>> = BTreeMap::new();
        for o in &self.orderings {
            groups.entry(o.len()).or_default().push(o);
        }
        groups
            .into_iter()
            .map(|(m, members)| {
                let pairs = pairs_of(self.k, members.iter().copied());
                let stats = StratumStats {
                    count: members.len(),
                    top1: top1_of(self.k, members.iter().copied()),
                    pair_totals: totals_of(&pairs),
                    pairs,
                };
                (m, stats)
            })
            .collect()
    }

    pub fn summary(&self) -> SummaryStats {
        let pairs = self.paired_comparisons();
        SummaryStats {
            top1: self.top1_frequencies(),
            pair_totals: totals_of(&pairs),
            pairs,
            by_length: self.conditional_summaries(),
        }
    }

    /// Mean rank per item. Unranked items of a top-m ordering share the
    /// midrank `(m + 1 + K) / 2` of the positions left unassigned.
    pub fn average_ranks(&self) -> Vec<f64> {
        let k = self.k;
        let mut sums = vec![0.0; k];
        for o in &self.orderings {
            let midrank = (o.len() + 1 + k) as f64 / 2.0;
            let mut ranked = vec![false; k];
            for (pos, &item) in o.items().iter().enumerate() {
                sums[item] += (pos + 1) as f64;
                ranked[item] = true;
            }
            for (i, r) in ranked.into_iter().enumerate() {
                if !r {
                    sums[i] += midrank;
                }
            }
        }
        let n = self.orderings.len() as f64;
        sums.into_iter().map(|s| s / n).collect()
    }
}

fn strip_key<'a>(comment: &'a str, key: &str) -> Option<&'a str> {
    let rest = comment.strip_prefix(key)?;
    rest.trim_start().strip_prefix('=')
}

fn top1_of<'a>(k: usize, orderings: impl Iterator<Item = &'a PartialOrdering>) -> Vec<u64> {
    let mut out = vec![0; k];
    for o in orderings {
        out[o.top()] += 1;
    }
    out
}

fn pairs_of<'a>(k: usize, orderings: impl Iterator<Item = &'a PartialOrdering>) -> Vec<Vec<u64>> {
    let mut out = vec![vec![0; k]; k];
    let mut chosen = vec![false; k];
    for o in orderings {
        chosen.iter_mut().for_each(|c| *c = false);
        for &winner in o.items() {
            chosen[winner] = true;
            for (loser, &c) in chosen.iter().enumerate() {
                if !c {
                    out[winner][loser] += 1;
                }
            }
        }
    }
    out
}

fn totals_of(pairs: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let k = pairs.len();
    (0..k)
        .map(|i| (0..k).map(|j| pairs[i][j] + pairs[j][i]).collect())
        .collect()
}
