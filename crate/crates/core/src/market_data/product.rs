use chrono::offset::LocalResult;
use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};
use chrono_tz::Europe::Berlin;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lead time between gate closure and delivery start.
pub const GATE_LEAD_MINUTES: i64 = 5;

/// Local clock hour at which the continuous intraday market opens on the day before delivery.
pub const MARKET_OPEN_HOUR: u32 = 15;

/// Converts a local (CET/CEST) wall-clock time to UTC.
///
/// Non-existent times (spring gap) are moved one hour forward, ambiguous
/// times (autumn overlap) resolve to their first occurrence.
pub fn localise(naive: NaiveDateTime) -> DateTime<Utc> {
    match Berlin.from_local_datetime(&naive) {
        LocalResult::Single(t) => t.with_timezone(&Utc),
        LocalResult::Ambiguous(first, _) => first.with_timezone(&Utc),
        LocalResult::None => localise(naive + Duration::hours(1)),
    }
}

fn local_midnight(day: NaiveDate) -> NaiveDateTime {
    day.and_hms_opt(0, 0, 0).expect("midnight exists")
}

/// An hourly delivery product `(d, h)`.
///
/// Hours follow the no-clock-change rule: on the spring transition day hour 2
/// is a surrogate for the real 3:00-4:00 product (both keys share one delivery
/// interval), on the autumn transition day only the first 2:00-3:00 occurrence
/// has a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProductKey {
    pub delivery_day: NaiveDate,
    pub delivery_hour: u8,
}

impl ProductKey {
    pub fn new(delivery_day: NaiveDate, delivery_hour: u8) -> Result<Self> {
        if delivery_hour > 23 {
            return Err(Error::InvalidInput(format!(
                "delivery hour {delivery_hour} outside 0..=23"
            )));
        }
        Ok(Self {
            delivery_day,
            delivery_hour,
        })
    }

    /// The 24 product keys of a delivery day.
    pub fn hours_of(day: NaiveDate) -> Vec<ProductKey> {
        (0..24)
            .map(|h| ProductKey {
                delivery_day: day,
                delivery_hour: h,
            })
            .collect()
    }

    pub fn delivery_start(&self) -> DateTime<Utc> {
        localise(local_midnight(self.delivery_day) + Duration::hours(self.delivery_hour as i64))
    }

    pub fn delivery_end(&self) -> DateTime<Utc> {
        self.delivery_start() + Duration::hours(1)
    }

    /// Gate closure, after which no further trades are possible.
    pub fn gate_closure(&self) -> DateTime<Utc> {
        self.delivery_start() - Duration::minutes(GATE_LEAD_MINUTES)
    }

    /// Opening of continuous trading, 15:00 local time on the day before delivery.
    pub fn market_open(&self) -> DateTime<Utc> {
        let prev = self.delivery_day - Duration::days(1);
        localise(local_midnight(prev) + Duration::hours(MARKET_OPEN_HOUR as i64))
    }

    /// The product one delivery hour earlier (hour 23 of the previous day for hour 0).
    pub fn previous_hour(&self) -> ProductKey {
        if self.delivery_hour == 0 {
            ProductKey {
                delivery_day: self.delivery_day - Duration::days(1),
                delivery_hour: 23,
            }
        } else {
            ProductKey {
                delivery_day: self.delivery_day,
                delivery_hour: self.delivery_hour - 1,
            }
        }
    }

    pub fn shift_days(&self, days: i64) -> ProductKey {
        ProductKey {
            delivery_day: self.delivery_day + Duration::days(days),
            delivery_hour: self.delivery_hour,
        }
    }

    /// Maps an hourly delivery interval back to its key.
    ///
    /// Returns `None` for intervals that are not whole local hours and for the
    /// discarded second occurrence of the autumn 2:00-3:00 hour. On the spring
    /// transition day the real 3:00-4:00 interval maps to hour 3.
    pub fn from_delivery_start(start: DateTime<Utc>) -> Option<ProductKey> {
        let local = start.with_timezone(&Berlin).naive_local();
        if local.minute() != 0 || local.second() != 0 || local.nanosecond() != 0 {
            return None;
        }
        let key = ProductKey {
            delivery_day: local.date(),
            delivery_hour: local.hour() as u8,
        };
        (key.delivery_start() == start).then_some(key)
    }
}

impl std::fmt::Display for ProductKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}h{:02}", self.delivery_day, self.delivery_hour)
    }
}

/// A forecast creation time expressed on the local clock relative to a delivery day.
///
/// `minutes` counts from local midnight of `day` and may be negative (creation on
/// the previous day). Shifting by whole days preserves the clock time, which is how
/// historical rows of the design matrix are aligned with the forecast row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CreationTime {
    pub day: NaiveDate,
    pub minutes: i64,
}

impl CreationTime {
    pub fn new(day: NaiveDate, minutes: i64) -> Self {
        Self { day, minutes }
    }

    /// Creation time `lag_hours` before the start of delivery hour `hour` on `day`.
    pub fn before_hour(day: NaiveDate, hour: u8, lag_hours: f64) -> Self {
        let minutes = (hour as f64 * 60.0 - lag_hours * 60.0).round() as i64;
        Self { day, minutes }
    }

    pub fn to_utc(&self) -> DateTime<Utc> {
        localise(local_midnight(self.day) + Duration::minutes(self.minutes))
    }

    pub fn shift_days(&self, days: i64) -> Self {
        Self {
            day: self.day + Duration::days(days),
            minutes: self.minutes,
        }
    }

    /// Time to delivery `h - tau` in floating-point hours on the nominal clock.
    pub fn hours_to_delivery(&self, product: &ProductKey) -> f64 {
        let day_offset = (product.delivery_day - self.day).num_days() as f64 * 24.0;
        day_offset + product.delivery_hour as f64 - self.minutes as f64 / 60.0
    }
}
