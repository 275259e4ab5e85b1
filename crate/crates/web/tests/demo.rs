use propfault_web::{smooth, spectrum, DemoCore};

fn band_power(freqs: &[f64], power: &[f64], lo: f64, hi: f64) -> f64 {
    freqs.iter().zip(power).filter(|(f, _)| **f >= lo && **f < hi).map(|(_, p)| p).sum()
}

#[test]
fn fault_spectrum_carries_more_rotor_band_power() {
    let s = spectrum(0.10, 1, 0, 3).unwrap();
    assert_eq!(s.channel, "acc_x");
    assert_eq!(s.frequencies.len(), s.healthy.len());
    assert_eq!(s.frequencies.len(), s.fault.len());
    let h = band_power(&s.frequencies, &s.healthy, 80.0, 150.0);
    let f = band_power(&s.frequencies, &s.fault, 80.0, 150.0);
    assert!(f > 1.2 * h, "{f} vs {h}");
    assert!(spectrum(0.1, 1, 6, 3).is_err());
}

#[test]
fn demo_detector_separates_and_calibrates() {
    let demo = DemoCore::fit(1).unwrap();
    let healthy = demo.scan(0.0, 1, 50).unwrap();
    let fault = demo.scan(0.10, 4, 50).unwrap();
    assert_eq!(healthy.q.len(), fault.q.len());
    let hs = smooth(&healthy.q, 0.3).unwrap();
    let fs = smooth(&fault.q, 0.3).unwrap();
    let pos = |v: &[f64]| v.iter().filter(|q| **q > 0.0).count() as f64 / v.len() as f64;
    assert!(pos(&fs) > 0.5, "{}", pos(&fs));
    assert!(pos(&hs) < 0.5, "{}", pos(&hs));
    let modal = (1..=6).max_by_key(|m| fault.motor.iter().filter(|x| *x == m).count()).unwrap();
    assert_eq!(modal, 4);

    let r = demo.cls(fs[fs.len() / 2], 0.05).unwrap();
    assert!(r.cls_det >= r.p_b);
    assert_eq!(r.cls_det, r.p_b / r.p_sb);
    let low = demo.cls(-1e6, 0.05).unwrap();
    assert_eq!((low.p_b, low.p_sb, low.detected), (1.0, 1.0, false));
}
