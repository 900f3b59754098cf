use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{mine_frequent_itemsets, rule_order, Itemset, MiningConfig, Rule, RulesError, Scope};
use crate::ingest::Transaction;

pub const ALL: &str = "ALL";

/// Country_O / Country_D labels of one mining run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScopeLabel {
    pub origin: String,
    pub destination: String,
}

impl ScopeLabel {
    pub fn global() -> Self {
        ScopeLabel { origin: ALL.into(), destination: ALL.into() }
    }
}

/// Output of one scoped mining run.
#[derive(Debug, Clone)]
pub struct ScopedRules {
    pub scope: ScopeLabel,
    pub transactions: usize,
    pub frequent_itemsets: usize,
    pub rules: Vec<Rule>,
}

/// Emits `F \ {b} => b` for every frequent `F` with at least two items and
/// every `b` in `F`, keeping antecedents up to `max_antecedent_size`.
///
/// Metrics are evaluated from integer counts: support `n(F)/T`, confidence
/// `n(F)/n(A)`, lift `n(F)·T / (n(A)·n(b))`. Rules are returned in
/// [`rule_order`] with global scope labels.
pub fn generate_rules(frequent: &[Itemset], total: u64, config: &MiningConfig) -> Result<Vec<Rule>, RulesError> {
    config.validate()?;
    let counts: HashMap<&[u16], u64> = frequent.iter().map(|f| (f.items.as_slice(), f.count)).collect();
    let lookup = |items: &[u16]| counts.get(items).copied().ok_or_else(|| RulesError::MissingSubset(items.to_vec()));

    let mut rules = Vec::new();
    for f in frequent.iter().filter(|f| f.items.len() >= 2 && f.items.len() - 1 <= config.max_antecedent_size) {
        let support = f.count as f64 / total as f64;
        if support < config.min_support {
            continue;
        }
        for (pos, &consequent) in f.items.iter().enumerate() {
            let mut antecedent = f.items.clone();
            antecedent.remove(pos);
            let n_a = lookup(&antecedent)?;
            let n_b = lookup(&[consequent])?;
            rules.push(Rule {
                antecedent,
                consequent,
                support,
                confidence: f.count as f64 / n_a as f64,
                lift: (f.count as f64 * total as f64) / (n_a as f64 * n_b as f64),
                count: f.count,
                scope_origin: ALL.into(),
                scope_destination: ALL.into(),
            });
        }
    }
    rules.sort_by(rule_order);
    Ok(rules)
}

/// Partitions transactions by the configured scope and mines each partition.
/// Reporters label Country_O and partners label Country_D.
pub fn mine_scoped(transactions: &[Transaction], config: &MiningConfig) -> Result<Vec<ScopedRules>, RulesError> {
    config.validate()?;
    if transactions.is_empty() {
        return Err(RulesError::EmptyTransactions);
    }
    let mut groups: BTreeMap<ScopeLabel, Vec<Transaction>> = BTreeMap::new();
    for t in transactions {
        let label = match config.scope {
            Scope::Global => ScopeLabel::global(),
            Scope::PerReporter => ScopeLabel { origin: t.reporter.clone(), destination: ALL.into() },
            Scope::PerPair => ScopeLabel { origin: t.reporter.clone(), destination: t.partner.clone() },
        };
        groups.entry(label).or_default().push(t.clone());
    }
    groups
        .into_iter()
        .map(|(scope, txs)| {
            let frequent = mine_frequent_itemsets(&txs, config.min_support, config.max_antecedent_size + 1)?;
            let mut rules = generate_rules(&frequent, txs.len() as u64, config)?;
            for r in &mut rules {
                r.scope_origin = scope.origin.clone();
                r.scope_destination = scope.destination.clone();
            }
            Ok(ScopedRules { scope, transactions: txs.len(), frequent_itemsets: frequent.len(), rules })
        })
        .collect()
}
