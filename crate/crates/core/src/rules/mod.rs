//! Association rules over chapter baskets: Apriori mining, single-consequent
//! rule generation, scoped runs, aggregation across scopes, and the rule table.

mod apriori;
mod generate;
mod store;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use apriori::mine_frequent_itemsets;
pub use generate::{generate_rules, mine_scoped, ScopeLabel, ScopedRules};
pub use store::{aggregate_rules, query_rules, AggregatedRule, RuleFilter, RuleStore, RULE_CSV_HEADER};

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("no transactions to mine")]
    EmptyTransactions,
    #[error("invalid mining config: {0}")]
    InvalidConfig(String),
    #[error("invalid rule filter: {0}")]
    InvalidFilter(String),
    #[error("count for itemset {0:?} is missing; frequent set is not subset-closed")]
    MissingSubset(Vec<u16>),
    #[error("rule table line {line}: {message}")]
    BadRow { line: u64, message: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A frequent itemset with its absolute transaction count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Itemset {
    /// Ascending chapter codes.
    pub items: Vec<u16>,
    pub count: u64,
}

/// `antecedent => consequent` with its quality metrics and scope labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub antecedent: Vec<u16>,
    pub consequent: u16,
    pub support: f64,
    pub confidence: f64,
    pub lift: f64,
    pub count: u64,
    pub scope_origin: String,
    pub scope_destination: String,
}

/// Which transactions a mining run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    /// All transactions in one model.
    #[default]
    Global,
    /// One model per reporter over its (partner, year) baskets.
    PerReporter,
    /// One model per (reporter, partner) over its years.
    PerPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningConfig {
    pub min_support: f64,
    pub max_antecedent_size: usize,
    pub scope: Scope,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig { min_support: 0.35, max_antecedent_size: 3, scope: Scope::Global }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<(), RulesError> {
        if !(self.min_support > 0.0 && self.min_support <= 1.0) {
            return Err(RulesError::InvalidConfig(format!("min_support must be in (0, 1], got {}", self.min_support)));
        }
        if self.max_antecedent_size < 1 {
            return Err(RulesError::InvalidConfig("max_antecedent_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Ordering used by every sorted rule output: confidence, lift and support
/// descending, then antecedent and consequent ascending.
pub fn rule_order(a: &Rule, b: &Rule) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(b.lift.total_cmp(&a.lift))
        .then(b.support.total_cmp(&a.support))
        .then_with(|| a.antecedent.cmp(&b.antecedent))
        .then(a.consequent.cmp(&b.consequent))
        .then_with(|| a.scope_origin.cmp(&b.scope_origin))
        .then_with(|| a.scope_destination.cmp(&b.scope_destination))
}
