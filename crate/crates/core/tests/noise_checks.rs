//! Statistical checks of the noise generators at large n.

use tme::data::make_gaussian_mixture;
use tme::noise::{inject, noise_stats, NoiseKind, NoiseSpec};

fn big_dataset(n: usize, k: usize, seed: u64) -> tme::LabeledDataset {
    make_gaussian_mixture(k, n, 4, 4.0, 1.0, seed).unwrap()
}

#[test]
fn symmetric_rate_and_transitions_concentrate() {
    let ds = big_dataset(100_000, 10, 1);
    let noisy = inject(&ds, &NoiseSpec { kind: NoiseKind::Symmetric, tau: 0.3, seed: 2 }).unwrap();
    assert!((noisy.flip_rate() - 0.3).abs() < 0.01, "rate {}", noisy.flip_rate());

    let stats = noise_stats(&noisy);
    let expected_off = 0.3 / 9.0;
    for c in 0..10 {
        assert!((stats.transition[c][c] - 0.7).abs() < 0.02);
        for o in 0..10 {
            if o != c {
                assert!(
                    (stats.transition[c][o] - expected_off).abs() < 0.01,
                    "transition[{c}][{o}] = {}",
                    stats.transition[c][o]
                );
            }
        }
    }
}

#[test]
fn pairflip_rate_and_support() {
    let ds = big_dataset(100_000, 10, 3);
    let noisy = inject(&ds, &NoiseSpec { kind: NoiseKind::Pairflip, tau: 0.45, seed: 4 }).unwrap();
    assert!((noisy.flip_rate() - 0.45).abs() < 0.01, "rate {}", noisy.flip_rate());

    let stats = noise_stats(&noisy);
    for c in 0..10 {
        assert!((stats.transition[c][(c + 1) % 10] - 0.45).abs() < 0.02);
        for o in 0..10 {
            if o != c && o != (c + 1) % 10 {
                assert_eq!(stats.transition[c][o], 0.0, "unexpected transition {c}->{o}");
            }
        }
    }
}

#[test]
fn instance_rate_concentrates_around_tau() {
    let ds = big_dataset(50_000, 10, 5);
    let noisy = inject(&ds, &NoiseSpec { kind: NoiseKind::Instance, tau: 0.3, seed: 6 }).unwrap();
    assert!((noisy.flip_rate() - 0.3).abs() < 0.02, "rate {}", noisy.flip_rate());
}

/// At tau = 0 the per-example rates follow the positive half of N(0, 0.1^2)
/// (mean 0.1 * sqrt(2/pi) ~ 0.0798), so a small but nonzero flip mass
/// remains.
#[test]
fn instance_zero_tau_leaves_halfnormal_mass() {
    let ds = big_dataset(50_000, 10, 7);
    let noisy = inject(&ds, &NoiseSpec { kind: NoiseKind::Instance, tau: 0.0, seed: 8 }).unwrap();
    let rate = noisy.flip_rate();
    assert!((0.04..0.12).contains(&rate), "rate {rate}");
}

#[test]
fn instance_noise_rate_insensitive_to_class_balance() {
    // Per-class rates vary (feature-dependent), but the overall rate holds.
    let ds = big_dataset(50_000, 4, 9);
    let noisy = inject(&ds, &NoiseSpec { kind: NoiseKind::Instance, tau: 0.5, seed: 10 }).unwrap();
    assert!((noisy.flip_rate() - 0.5).abs() < 0.02, "rate {}", noisy.flip_rate());
}
