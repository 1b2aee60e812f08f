use std::f64::consts::PI;

use bosechain_web::{ground_profile, quench_frames, transfer_curve};

#[test]
fn transfer_curve_reaches_the_far_end() {
    let data = transfer_curve(9, 2.0, PI / 2.0, 10).unwrap();
    assert_eq!(data.len(), 33);
    let last = &data[30..];
    assert!((last[0] - PI / 2.0).abs() < 1e-15);
    assert!((last[1] - 1.0).abs() < 1e-10);
    assert!(last[2] < 0.9);
    assert_eq!(data[0], 0.0);
    assert!(data[1] < 1e-20 && data[2] < 1e-20);
}

#[test]
fn ground_profile_layout() {
    let out = ground_profile(4, "pth", 2.0, 0.0).unwrap();
    assert_eq!(out.len(), 6);
    let total: f64 = out[..4].iter().sum();
    assert!((total - 4.0).abs() < 1e-10);
    assert!((out[0] - out[3]).abs() < 1e-6);
    assert!(out[4] > 0.0);
    assert!((out[5] - 0.5).abs() < 1e-4);
}

#[test]
fn quench_frames_layout() {
    let out = quench_frames(4, "ch", 2.0, 1.0, 1.0, 10).unwrap();
    assert_eq!(out.len(), 11 * 4);
    assert_eq!(&out[..4], &[1.0; 4]);
    for frame in out.chunks(4) {
        assert!((frame.iter().sum::<f64>() - 4.0).abs() < 1e-10);
    }
}
