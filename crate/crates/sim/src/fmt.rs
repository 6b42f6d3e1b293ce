//! Float rendering for every CSV and summary file: 9 significant digits,
//! `%g`-style switching between fixed and exponent notation.

pub const SIG_DIGITS: usize = 9;

pub fn sig9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // Round once in exponent form; the rounded exponent picks the layout.
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_fraction(mantissa))
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn opt_sig9(x: Option<f64>) -> String {
    x.map(sig9).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_and_exponent_forms() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(-2.5), "-2.5");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(123456789.4), "123456789");
        assert_eq!(sig9(1234567890.0), "1.23456789e9");
        assert_eq!(sig9(4e6), "4000000");
        assert_eq!(sig9(1.5e-7), "1.5e-7");
        assert_eq!(sig9(0.0001), "0.0001");
        assert_eq!(sig9(f64::NAN), "NaN");
    }

    #[test]
    fn rounding_carries_into_the_exponent() {
        assert_eq!(sig9(999999999.7), "1e9");
        assert_eq!(sig9(0.99999999996), "1");
    }

    proptest::proptest! {
        #[test]
        fn keeps_nine_significant_digits(x in proptest::num::f64::NORMAL) {
            let back: f64 = sig9(x).parse().unwrap();
            proptest::prop_assert!(((back - x) / x).abs() <= 5e-9);
        }
    }
}
