//! Paginated review collection against recorded store responses.
//!
//! The fetcher runs on a virtual clock, so the rate limit and the retry
//! backoff are visible in the request times without real waiting. Swap
//! `FixtureTransport` for `HttpTransport::new()?` and `ManualClock` for the
//! default clock (`Fetcher::new`) to talk to the store.

use std::time::Duration;

use anyhow::Result;
use avis::corpus::sample_reviews;
use avis::ingest::transport::{encode_page, Page, StoreReview};
use avis::ingest::{export_raw, FetchSpec, Fetcher, FixtureTransport, ManualClock};

fn review(i: usize) -> StoreReview {
    StoreReview {
        id: format!("gp:AOqpTO{i:04}"),
        // every fifth review is rating-only
        text: (!i.is_multiple_of(5)).then(|| format!("Avis {i} : la synchronisation avec la montre échoue")),
        score: Some((i % 5 + 1) as u8),
        posted_at: Some(1_640_000_000 + 3600 * i as i64),
    }
}

pub fn run() -> Result<()> {
    let app = "com.garmin.android.apps.connectmobile";
    let page = |range: std::ops::Range<usize>, next: Option<&str>| {
        encode_page(&Page {
            reviews: range.map(review).collect(),
            next_token: next.map(str::to_string),
        })
    };
    let transport = FixtureTransport::default()
        .with_page(&format!("{app}:fr:-"), page(0..40, Some("p2")))
        // the second page fails twice before it is served
        .with_status(&format!("{app}:fr:p2"), 503)
        .with_network_error(&format!("{app}:fr:p2"), "connection reset")
        .with_page(&format!("{app}:fr:p2"), page(35..80, Some("p3")))
        .with_page(&format!("{app}:fr:p3"), page(80..100, None));

    let spec = FetchSpec {
        page_size: 40,
        rate_limit: 2.0,
        ..FetchSpec::new(app, 70)?
    };
    let clock = ManualClock::default();
    let mut fetcher = Fetcher::with_clock(transport.clone(), clock.clone());
    let reviews = fetcher.fetch(&spec)?;
    let stats = fetcher.stats();

    println!("kept {} reviews of {app}", reviews.len());
    println!(
        "{} requests, {} retries, {} duplicates dropped, {} rating-only reviews skipped",
        stats.requests, stats.retries, stats.duplicates, stats.skipped_empty
    );
    for (key, t) in transport.requests().iter().zip(&stats.request_times) {
        println!("  t = {:>5.1} s  {key}", t.as_secs_f64());
    }
    assert!(clock_elapsed(&clock) >= Duration::from_secs(1));

    // sample a fixed-size subset and export it as a raw pool
    let sample = sample_reviews(&reviews, 25, 7)?;
    let dir = tempfile::tempdir()?;
    let out = dir.path().join("garmin_pool.csv");
    export_raw(&sample, &out)?;
    println!("\nwrote {} sampled reviews to {}", sample.len(), out.display());
    print!("{}", std::fs::read_to_string(&out)?.lines().take(3).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}

fn clock_elapsed(clock: &ManualClock) -> Duration {
    use avis::ingest::Clock;
    clock.now()
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
