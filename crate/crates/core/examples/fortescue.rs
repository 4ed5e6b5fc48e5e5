//! Symmetrical components of an unbalanced phase set and back.

use num_complex::Complex64;
use tdcosim::driver::unbalance_factor;
use tdcosim::netmodel::{phases_to_sequence, sequence_to_phase};

fn main() {
    let polar = |m: f64, deg: f64| Complex64::from_polar(m, deg.to_radians());
    let v = [polar(1.0, 0.0), polar(0.97, -121.0), polar(1.02, 119.5)];
    let s = phases_to_sequence(v);
    println!("zero     {:.6} ∠ {:8.3}°", s.zero.norm(), s.zero.arg().to_degrees());
    println!("positive {:.6} ∠ {:8.3}°", s.positive.norm(), s.positive.arg().to_degrees());
    println!("negative {:.6} ∠ {:8.3}°", s.negative.norm(), s.negative.arg().to_degrees());
    println!("unbalance factor {:.4}%", unbalance_factor(&v).unwrap());

    let back = sequence_to_phase(&s);
    let err = v.iter().zip(back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    println!("roundtrip error {err:.2e}");
}
