use serde::{Deserialize, Serialize};

/// Categorical skill level: a row of the skill embedding table.
pub type SkillBucket = usize;

/// How ratings map onto skill buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketScheme {
    /// 11 buckets: [0,1100), then 100-point bands up to [1900,2000), then 2000+.
    #[default]
    Standard,
    /// 12 buckets: (0,1000], then 100-point bands up to (1900,2000], then above 2000.
    Extended,
}

impl BucketScheme {
    pub fn bucket_count(self) -> usize {
        match self {
            BucketScheme::Standard => 11,
            BucketScheme::Extended => 12,
        }
    }

    /// Lowest rating that falls in `bucket` (0 for the first one).
    pub fn lower_edge(self, bucket: SkillBucket) -> u32 {
        match (self, bucket) {
            (_, 0) => 0,
            (BucketScheme::Standard, b) => 1000 + 100 * b as u32,
            (BucketScheme::Extended, b) => 901 + 100 * b as u32,
        }
    }

    /// Human-readable label, e.g. "<1100", "1500-1599", ">=2000".
    pub fn label(self, bucket: SkillBucket) -> String {
        let last = self.bucket_count() - 1;
        match self {
            BucketScheme::Standard => match bucket {
                0 => "<1100".to_string(),
                b if b == last => ">=2000".to_string(),
                b => format!("{}-{}", 1000 + 100 * b, 1099 + 100 * b),
            },
            BucketScheme::Extended => match bucket {
                0 => "<=1000".to_string(),
                b if b == last => ">2000".to_string(),
                b => format!("{}-{}", 901 + 100 * b, 1000 + 100 * b),
            },
        }
    }
}

pub fn bucket_of(rating: u32, scheme: BucketScheme) -> SkillBucket {
    match scheme {
        BucketScheme::Standard => match rating {
            0..1100 => 0,
            r if r >= 2000 => 10,
            r => (r as usize - 1000) / 100,
        },
        BucketScheme::Extended => match rating {
            0..=1000 => 0,
            r if r > 2000 => 11,
            r => (r as usize - 901) / 100,
        },
    }
}
