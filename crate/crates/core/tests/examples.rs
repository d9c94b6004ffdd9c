//! Runs every example program so they stay working.

#[allow(dead_code)]
#[path = "../examples/corpus_stats.rs"]
mod corpus_stats;
#[allow(dead_code)]
#[path = "../examples/fetch_reviews.rs"]
mod fetch_reviews;
#[allow(dead_code)]
#[path = "../examples/encode.rs"]
mod encode;
#[allow(dead_code)]
#[path = "../examples/split.rs"]
mod split;
#[allow(dead_code)]
#[path = "../examples/metrics.rs"]
mod metrics;
#[allow(dead_code)]
#[path = "../examples/train_tiny.rs"]
mod train_tiny;
#[allow(dead_code)]
#[path = "../examples/same_apps.rs"]
mod same_apps;
#[allow(dead_code)]
#[path = "../examples/leave_one_app_out.rs"]
mod leave_one_app_out;
#[allow(dead_code)]
#[path = "../examples/gradient_check.rs"]
mod gradient_check;
#[allow(dead_code)]
#[path = "../examples/classify.rs"]
mod classify;

#[test]
fn corpus_stats_runs() {
    corpus_stats::run(None).unwrap();
}

#[test]
fn fetch_reviews_runs() {
    fetch_reviews::run().unwrap();
}

#[test]
fn encode_runs() {
    encode::run(None).unwrap();
}

#[test]
fn split_runs() {
    split::run().unwrap();
}

#[test]
fn metrics_runs() {
    metrics::run().unwrap();
}

#[test]
fn train_tiny_runs() {
    train_tiny::run().unwrap();
}

#[test]
fn same_apps_runs() {
    same_apps::run(2).unwrap();
}

#[test]
fn leave_one_app_out_runs() {
    leave_one_app_out::run(1).unwrap();
}

#[test]
fn gradient_check_runs() {
    gradient_check::run().unwrap();
}

#[test]
fn classify_runs() {
    classify::run(None).unwrap();
}
