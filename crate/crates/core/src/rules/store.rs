use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Serialize;

use super::generate::ScopeLabel;
use super::{rule_order, Rule, RulesError};
use crate::hs::{chapter_name, parse_codes, render_codes};

pub const RULE_CSV_HEADER: [&str; 10] =
    ["Lhs", "Rhs", "Lhs_name", "Rhs_name", "Support", "Confidence", "Lift", "Count", "Country_O", "Country_D"];

/// Flat rule table, the file-backed equivalent of the relational rule store.
#[derive(Debug, Clone, Default)]
pub struct RuleStore {
    pub rules: Vec<Rule>,
}

fn antecedent_names(codes: &[u16]) -> String {
    codes.iter().map(|&c| chapter_name(c)).collect::<Vec<_>>().join(" | ")
}

impl RuleStore {
    pub fn new(rules: Vec<Rule>) -> Self {
        RuleStore { rules }
    }

    /// Writes the rule table with six-decimal floats. Rows are written in
    /// the store's current order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RulesError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(RULE_CSV_HEADER)?;
        for r in &self.rules {
            w.write_record([
                render_codes(&r.antecedent),
                render_codes(&[r.consequent]),
                antecedent_names(&r.antecedent),
                chapter_name(r.consequent).into_owned(),
                format!("{:.6}", r.support),
                format!("{:.6}", r.confidence),
                format!("{:.6}", r.lift),
                r.count.to_string(),
                r.scope_origin.clone(),
                r.scope_destination.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a rule table written by [`RuleStore::write_csv`]; `#` lines are
    /// skipped.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, RulesError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(RULE_CSV_HEADER.iter().copied()) {
            return Err(RulesError::BadRow {
                line: 1,
                message: format!("expected header `{}`", RULE_CSV_HEADER.join(",")),
            });
        }
        let mut rules = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: &str| RulesError::BadRow { line, message: message.to_string() };
            let antecedent = parse_codes(&row[0]).ok_or_else(|| bad("unparseable Lhs"))?;
            let consequent = match parse_codes(&row[1]).as_deref() {
                Some([c]) => *c,
                _ => return Err(bad("Rhs must hold exactly one item")),
            };
            let num = |i: usize| row[i].trim().parse::<f64>().map_err(|_| bad(&format!("bad {}", RULE_CSV_HEADER[i])));
            rules.push(Rule {
                antecedent,
                consequent,
                support: num(4)?,
                confidence: num(5)?,
                lift: num(6)?,
                count: row[7].trim().parse().map_err(|_| bad("bad Count"))?,
                scope_origin: row[8].to_string(),
                scope_destination: row[9].to_string(),
            });
        }
        Ok(RuleStore { rules })
    }
}

/// Conjunctive rule query; unset fields match everything.
#[derive(Debug, Clone, Default)]
pub struct RuleFilter {
    pub min_confidence: Option<f64>,
    pub min_lift: Option<f64>,
    /// Every listed item must appear in the antecedent.
    pub antecedent_contains: Vec<u16>,
    pub consequent: Option<u16>,
    pub origin: Option<String>,
    pub destination: Option<String>,
}

impl RuleFilter {
    fn validate(&self) -> Result<(), RulesError> {
        if let Some(c) = self.min_confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(RulesError::InvalidFilter(format!("min_confidence must be in [0, 1], got {c}")));
            }
        }
        if let Some(l) = self.min_lift {
            if l.is_nan() || l < 0.0 {
                return Err(RulesError::InvalidFilter(format!("min_lift must be non-negative, got {l}")));
            }
        }
        Ok(())
    }

    fn matches(&self, r: &Rule) -> bool {
        self.min_confidence.is_none_or(|c| r.confidence >= c)
            && self.min_lift.is_none_or(|l| r.lift >= l)
            && self.antecedent_contains.iter().all(|i| r.antecedent.contains(i))
            && self.consequent.is_none_or(|c| r.consequent == c)
            && self.origin.as_ref().is_none_or(|o| &r.scope_origin == o)
            && self.destination.as_ref().is_none_or(|d| &r.scope_destination == d)
    }
}

pub fn query_rules(store: &RuleStore, filter: &RuleFilter) -> Result<Vec<Rule>, RulesError> {
    filter.validate()?;
    let mut hits: Vec<Rule> = store.rules.iter().filter(|r| filter.matches(r)).cloned().collect();
    hits.sort_by(rule_order);
    Ok(hits)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregatedRule {
    pub antecedent: Vec<u16>,
    pub consequent: u16,
    pub antecedent_name: String,
    pub consequent_name: String,
    pub sum_of_confidence: f64,
    /// Number of scopes contributing to the sum.
    pub scopes: usize,
}

/// Sums confidence of identical `antecedent => consequent` rules across
/// scopes, highest sum first.
pub fn aggregate_rules(rule_sets: &[(ScopeLabel, Vec<Rule>)]) -> Vec<AggregatedRule> {
    let mut acc: BTreeMap<(Vec<u16>, u16), (f64, usize)> = BTreeMap::new();
    for (_, rules) in rule_sets {
        for r in rules {
            let e = acc.entry((r.antecedent.clone(), r.consequent)).or_insert((0.0, 0));
            e.0 += r.confidence;
            e.1 += 1;
        }
    }
    let mut out: Vec<AggregatedRule> = acc
        .into_iter()
        .map(|((antecedent, consequent), (sum, scopes))| AggregatedRule {
            antecedent_name: antecedent_names(&antecedent),
            consequent_name: chapter_name(consequent).into_owned(),
            antecedent,
            consequent,
            sum_of_confidence: sum,
            scopes,
        })
        .collect();
    // stable sort keeps the (antecedent, consequent) order among ties
    out.sort_by(|a, b| b.sum_of_confidence.total_cmp(&a.sum_of_confidence));
    out
}
