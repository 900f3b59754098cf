//! Trade-flow analytics: association rules over HS-2 baskets, k-means country
//! clustering, gradient-boosted regression trees, the cluster-filtered
//! training pipeline, and historical-range / MAD series validation.

pub mod clustering;
pub mod eml;
pub mod hs;
pub mod ingest;
pub mod rules;
pub mod sentinel;
pub mod synth;
pub mod trees;

pub use clustering::{kmeans, select_k, silhouette, sse, ClusterModel, KSelectionReport};
pub use eml::{commodity_report, run_eml, EmlConfig, EmlResult};
pub use ingest::{
    build_country_vectors, build_transactions, load_feature_csv, load_trade_csv, CountryVector, FeatureTable,
    TradeRecord, Transaction,
};
pub use rules::{
    aggregate_rules, generate_rules, mine_frequent_itemsets, query_rules, Itemset, MiningConfig, Rule, RuleFilter,
    RuleStore,
};
pub use sentinel::{
    detect_paired_outliers, detect_series_outliers, flag_value, food_supply, mad_geometric, mad_univariate, FlagColor,
    MadConfig, SupplyLedger,
};
pub use trees::{feature_importance, fit_boosted, fit_tree, predict, r_squared, BoostConfig, BoostedModel};
