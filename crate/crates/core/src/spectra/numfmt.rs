//! Fixed numeric formatting shared by every text writer.

/// m/z with six decimals.
pub fn fmt_mz(x: f64) -> String {
    format!("{x:.6}")
}

/// Nine significant digits, `%.9g` style: fixed notation for moderate
/// exponents, scientific otherwise, trailing zeros trimmed.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Round-trip a value through its canonical text form.
pub fn canonical_mz(x: f64) -> f64 {
    fmt_mz(x).parse().expect("formatted m/z parses")
}

pub fn canonical_sig9(x: f64) -> f64 {
    fmt_sig9(x).parse().expect("formatted height parses")
}
