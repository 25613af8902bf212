//! Segment statistics: the additive second-moment algebra and plane fits.
//!
//! ```bash
//! cargo run -p scene-grammar --example scene_statistics
//! ```

use nalgebra::Vector3;
use scene_grammar::SegmentStats;

fn main() {
    // A slightly noisy horizontal patch and a vertical one.
    let horizontal: Vec<Vector3<f64>> = (0..100)
        .map(|i| {
            let (a, b) = (i % 10, i / 10);
            Vector3::new(
                a as f64 * 0.1,
                b as f64 * 0.1,
                0.7 + if i % 7 == 0 { 0.002 } else { 0.0 },
            )
        })
        .collect();
    let vertical: Vec<Vector3<f64>> = (0..100)
        .map(|i| {
            let (a, b) = (i % 10, i / 10);
            Vector3::new(a as f64 * 0.1, 1.0, b as f64 * 0.08)
        })
        .collect();

    let h = SegmentStats::from_points(&horizontal, 0.81);
    let v = SegmentStats::from_points(&vertical, 0.72);

    let (hn, hd) = h.plane_fit().unwrap();
    let (vn, vd) = v.plane_fit().unwrap();
    println!("horizontal patch: normal {:?}, residual {hd:.6}", hn.as_slice());
    println!("vertical patch:   normal {:?}, residual {vd:.6}", vn.as_slice());

    // Merging is associative and commutative; the union's plane fit comes
    // straight from the merged scatter, no points needed.
    let m = h.merge(&v);
    assert_eq!(m.point_count, 200);
    let back = v.merge(&h);
    assert_eq!(m.sum, back.sum);
    println!(
        "merged: {} points, centroid {:?}, z range [{}, {}]",
        m.point_count,
        m.centroid().as_slice(),
        m.z_min,
        m.z_max
    );
    println!("merged plane residual: {:.4} (high: the union is not planar)", m.plane_residual());
}
