//! Voice and data rating arithmetic shared by every charging scheme.

use crate::account::TariffPlan;
use crate::money::Money;

/// Number of started billing increments in `duration_seconds`.
pub fn billed_increments(tariff: &TariffPlan, duration_seconds: u64) -> u64 {
    duration_seconds.div_ceil(tariff.increment_seconds())
}

/// Cost of a call: every started increment is charged in full. Zero seconds cost zero.
pub fn rate_voice_cost(tariff: &TariffPlan, duration_seconds: u64) -> Money {
    let increments = billed_increments(tariff, duration_seconds);
    tariff.voice_rate() * increments as i64
}

/// Longest call the balance can pay for, always a whole number of increments.
///
/// A free tariff (`voice_rate == 0`) is unbounded and yields the largest
/// increment multiple that fits in a `u64`. Negative balances yield 0.
pub fn max_chargeable_duration(tariff: &TariffPlan, balance: Money) -> u64 {
    let increment = tariff.increment_seconds();
    if balance.is_negative() {
        return 0;
    }
    let rate = tariff.voice_rate().minor_units();
    if rate == 0 {
        return u64::MAX / increment * increment;
    }
    let increments = (balance.minor_units() / rate) as u64;
    increments.saturating_mul(increment)
}

/// Whole kilobytes (1024 bytes) billed for a byte count, rounding up.
pub fn billed_kilobytes(bytes: u64) -> u64 {
    bytes.div_ceil(1024)
}

pub fn rate_data_cost(tariff: &TariffPlan, bytes: u64) -> Money {
    tariff.data_rate() * billed_kilobytes(bytes) as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tariff(rate: i64, increment: u64) -> TariffPlan {
        TariffPlan::new(
            "t",
            Money::from_minor(rate),
            increment,
            Money::from_minor(2),
        )
        .unwrap()
    }

    // Independent route: walk the call second by second, paying the full
    // rate at the first second of each increment.
    fn per_second_cost(rate: i64, increment: u64, duration: u64) -> i64 {
        let mut cost = 0;
        for second in 0..duration {
            if second % increment == 0 {
                cost += rate;
            }
        }
        cost
    }

    #[test]
    fn voice_cost_examples() {
        let t = tariff(30, 60);
        assert_eq!(rate_voice_cost(&t, 0), Money::ZERO);
        assert_eq!(per_second_cost(30, 60, 61), 60);
        assert_eq!(rate_voice_cost(&t, 61), Money::from_minor(60));
        assert_eq!(per_second_cost(30, 60, 180), 90);
        assert_eq!(rate_voice_cost(&t, 180), Money::from_minor(90));
    }

    #[test]
    fn countdown_examples() {
        let t = tariff(30, 60);
        assert_eq!(max_chargeable_duration(&t, Money::ZERO), 0);
        assert_eq!(max_chargeable_duration(&t, Money::from_minor(100)), 180);
        assert_eq!(max_chargeable_duration(&t, Money::from_minor(90)), 180);
        assert_eq!(max_chargeable_duration(&t, Money::from_minor(-5)), 0);
    }

    #[test]
    fn free_tariff_is_unbounded() {
        let t = tariff(0, 60);
        let d = max_chargeable_duration(&t, Money::ZERO);
        assert_eq!(d % 60, 0);
        assert!(d > u64::MAX - 60);
    }

    #[test]
    fn data_cost_rounds_up_to_kilobytes() {
        let t = tariff(30, 60);
        assert_eq!(billed_kilobytes(0), 0);
        assert_eq!(rate_data_cost(&t, 0), Money::ZERO);
        assert_eq!(billed_kilobytes(1025), 2);
        assert_eq!(rate_data_cost(&t, 1025), Money::from_minor(4));
        assert_eq!(rate_data_cost(&t, 3000), Money::from_minor(6));
    }

    proptest! {
        #[test]
        fn cost_is_monotone_and_nearly_subadditive(
            rate in 0i64..500,
            increment in prop::sample::select(vec![1u64, 6, 30, 60]),
            a in 0u64..5000,
            b in 0u64..5000,
        ) {
            let t = tariff(rate, increment);
            let ca = rate_voice_cost(&t, a);
            prop_assert!(rate_voice_cost(&t, a + 1) >= ca);
            let cb = rate_voice_cost(&t, b);
            prop_assert!(rate_voice_cost(&t, a + b) <= ca + cb + t.voice_rate());
            prop_assert_eq!(ca.minor_units(), per_second_cost(rate, increment, a));
        }

        #[test]
        fn countdown_is_the_largest_affordable_duration(
            rate in 1i64..200,
            increment in prop::sample::select(vec![1u64, 30, 60]),
            balance in 0i64..1000,
        ) {
            let t = tariff(rate, increment);
            let d = max_chargeable_duration(&t, Money::from_minor(balance));
            prop_assert_eq!(d % increment, 0);
            prop_assert!(rate_voice_cost(&t, d).minor_units() <= balance);
            prop_assert!(rate_voice_cost(&t, d + 1).minor_units() > balance);
        }
    }
}
