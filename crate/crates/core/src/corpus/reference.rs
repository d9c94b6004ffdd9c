//! Label counts of the published French review dataset (6000 reviews, three
//! Health & Fitness apps, 2000 sampled reviews each).

use super::{Label, LabelCounts};

pub const GARMIN_CONNECT: &str = "Garmin Connect";
pub const HUAWEI_HEALTH: &str = "Huawei Health";
pub const SAMSUNG_HEALTH: &str = "Samsung Health";

pub const APPS: [&str; 3] = [GARMIN_CONNECT, HUAWEI_HEALTH, SAMSUNG_HEALTH];

/// Number of reviews collected per app before sampling.
pub const COLLECTED: [(&str, usize); 3] = [
    (GARMIN_CONNECT, 22880),
    (HUAWEI_HEALTH, 10304),
    (SAMSUNG_HEALTH, 18400),
];

pub const SAMPLED_PER_APP: usize = 2000;

/// Annotated counts per app, label order (R, B, F, U).
pub const LABEL_COUNTS: [(&str, LabelCounts); 3] = [
    (
        GARMIN_CONNECT,
        LabelCounts {
            total: 2000,
            counts: [1260, 757, 170, 493],
        },
    ),
    (
        HUAWEI_HEALTH,
        LabelCounts {
            total: 2000,
            counts: [1068, 819, 384, 289],
        },
    ),
    (
        SAMSUNG_HEALTH,
        LabelCounts {
            total: 2000,
            counts: [1324, 491, 486, 349],
        },
    ),
];

pub fn counts_for(app: &str) -> Option<LabelCounts> {
    LABEL_COUNTS
        .iter()
        .find(|(name, _)| *name == app)
        .map(|(_, c)| *c)
}

/// Whole-dataset counts: R=3652, B=2067, F=1040, U=1131 over 6000 reviews.
pub fn total_counts() -> LabelCounts {
    LABEL_COUNTS
        .iter()
        .fold(LabelCounts::default(), |acc, (_, c)| acc + *c)
}

/// Whole-dataset support of one label.
pub fn support(label: Label) -> usize {
    total_counts().get(label)
}
