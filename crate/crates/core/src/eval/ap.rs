//! Average precision with junk removal.
//!
//! Junk ids are dropped from the ranking before scoring, so they neither
//! help nor hurt. AP is the mean, over all positives, of the precision at
//! each positive's rank; positives missing from the ranking contribute 0.

use std::collections::{BTreeMap, HashSet};

use log::warn;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Relevance {
    positive: HashSet<String>,
    junk: HashSet<String>,
}

impl Relevance {
    pub fn new<I, J, S, U>(positive: I, junk: J) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = U>,
        S: Into<String>,
        U: Into<String>,
    {
        let positive: HashSet<String> = positive.into_iter().map(Into::into).collect();
        let junk: HashSet<String> = junk.into_iter().map(Into::into).collect();
        if let Some(both) = positive.intersection(&junk).next() {
            return Err(Error::InvalidArgument(format!("`{both}` is both positive and junk")));
        }
        Ok(Relevance { positive, junk })
    }

    pub fn positive(&self) -> &HashSet<String> {
        &self.positive
    }

    pub fn junk(&self) -> &HashSet<String> {
        &self.junk
    }

    /// Adds `id` to the junk set unless it is a positive.
    pub fn with_junk(mut self, id: &str) -> Self {
        if !self.positive.contains(id) {
            self.junk.insert(id.to_string());
        }
        self
    }
}

pub fn average_precision<S: AsRef<str>>(ranking: &[S], rel: &Relevance) -> Result<f64> {
    let mut seen = HashSet::with_capacity(ranking.len());
    for id in ranking {
        if !seen.insert(id.as_ref()) {
            return Err(Error::InvalidArgument(format!(
                "duplicate id `{}` in ranking",
                id.as_ref()
            )));
        }
    }
    if rel.positive.is_empty() {
        warn!("query has no positives; AP defined as 0");
        return Ok(0.0);
    }
    let mut rank = 0usize;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for id in ranking.iter().map(AsRef::as_ref) {
        if rel.junk.contains(id) {
            continue;
        }
        rank += 1;
        if rel.positive.contains(id) {
            hits += 1;
            sum += hits as f64 / rank as f64;
        }
    }
    Ok(sum / rel.positive.len() as f64)
}

/// Arithmetic mean of per-query APs, in query-id order.
pub fn mean_average_precision<S: AsRef<str>>(
    rankings: &BTreeMap<String, Vec<S>>,
    relevance: &BTreeMap<String, Relevance>,
) -> Result<f64> {
    if relevance.is_empty() {
        return Err(Error::InvalidArgument("no queries".into()));
    }
    let mut total = 0.0;
    for (query, rel) in relevance {
        let ranking = rankings
            .get(query)
            .ok_or_else(|| Error::InvalidArgument(format!("no ranking for query `{query}`")))?;
        total += average_precision(ranking, rel)?;
    }
    Ok(total / relevance.len() as f64)
}
