//! Variable ranking: each site ranks its predictors by random-forest Gini
//! importance, then only the integer ranks are federated into a global order.

mod aggregate;
mod forest;

pub use aggregate::{aggregate_rankings, GlobalRanking, LocalRanking};
pub use forest::{forest_importance, gini_importances, ForestParams};
