//! Binary16 conversions.
//!
//! The computed codes operate on raw half-precision bit patterns, so the
//! conversions are done by hand on the bits rather than through a float
//! type, with round-to-nearest-even on the narrowing side.

/// Widens a binary16 bit pattern to f32. Exact for all finite inputs.
pub fn f16_to_f32(bits: u16) -> f32 {
    let exp = (bits >> 10) & 0x1F;
    let man = (bits & 0x3FF) as u32;
    let mag = match exp {
        0 => man as f32 * (1.0 / 16_777_216.0), // subnormal units of 2^-24, product exact
        31 => {
            if man == 0 {
                f32::INFINITY
            } else {
                f32::NAN
            }
        }
        e => f32::from_bits(((e as u32 + 112) << 23) | (man << 13)),
    };
    if bits & 0x8000 != 0 {
        -mag
    } else {
        mag
    }
}

/// Narrows f32 to a binary16 bit pattern with round-to-nearest-even.
pub fn f32_to_f16(x: f32) -> u16 {
    let bits = x.to_bits();
    let sign = ((bits >> 16) & 0x8000) as u16;
    let exp = ((bits >> 23) & 0xFF) as i32 - 127;
    let man = bits & 0x7F_FFFF;
    if exp == 128 {
        // infinity or NaN (quiet bit kept)
        return sign | 0x7C00 | if man != 0 { 0x200 } else { 0 };
    }
    if exp > 15 {
        return sign | 0x7C00;
    }
    if exp >= -14 {
        let keep = man >> 13;
        let rest = man & 0x1FFF;
        let mut h = (((exp + 15) as u32) << 10) | keep;
        if rest > 0x1000 || (rest == 0x1000 && keep & 1 == 1) {
            h += 1; // may carry into the exponent; that is the correct rounding
        }
        return sign | h as u16;
    }
    if exp >= -25 {
        // subnormal: shift the full significand down to units of 2^-24
        let m = 0x80_0000 | man;
        let s = -(exp + 1) as u32; // 14..=24
        let keep = m >> s;
        let rest = m & ((1 << s) - 1);
        let half = 1 << (s - 1);
        let mut h = keep;
        if rest > half || (rest == half && keep & 1 == 1) {
            h += 1;
        }
        return sign | h as u16;
    }
    sign // underflows to zero
}
