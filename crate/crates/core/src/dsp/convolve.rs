use realfft::num_complex::Complex;
use realfft::RealFftPlanner;

use crate::error::{Error, Result};

/// Kernels at most this long are convolved directly in the time domain,
/// which is exact for trivial kernels such as a unit impulse.
const DIRECT_MAX: usize = 64;

/// Full linear convolution, `len(signal) + len(kernel) - 1` samples.
///
/// Short operands use the direct sum; otherwise a single zero-padded FFT, or
/// overlap-add when the signal is much longer than the kernel.
pub fn fast_convolve(signal: &[f64], kernel: &[f64]) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::Empty("signal"));
    }
    if kernel.is_empty() {
        return Err(Error::Empty("kernel"));
    }
    let (long, short) = if signal.len() >= kernel.len() {
        (signal, kernel)
    } else {
        (kernel, signal)
    };
    if short.len() <= DIRECT_MAX {
        return Ok(direct(long, short));
    }
    let fft_len = (2 * short.len()).next_power_of_two().max(4096);
    let block = fft_len - short.len() + 1;
    if long.len() <= 2 * block {
        Ok(single_fft(long, short))
    } else {
        Ok(overlap_add(long, short, fft_len))
    }
}

fn direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (j, &hj) in h.iter().enumerate() {
        for (o, &xi) in out[j..j + x.len()].iter_mut().zip(x) {
            *o += xi * hj;
        }
    }
    out
}

fn single_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut buf = vec![0.0; n];
    buf[..x.len()].copy_from_slice(x);
    let mut xs = fwd.make_output_vec();
    fwd.process(&mut buf, &mut xs).expect("fft length");

    buf.fill(0.0);
    buf[..h.len()].copy_from_slice(h);
    let mut hs = fwd.make_output_vec();
    fwd.process(&mut buf, &mut hs).expect("fft length");

    for (a, b) in xs.iter_mut().zip(&hs) {
        *a *= b;
    }
    inv.process(&mut xs, &mut buf).expect("fft length");
    let scale = 1.0 / n as f64;
    buf.truncate(out_len);
    buf.iter_mut().for_each(|v| *v *= scale);
    buf
}

fn overlap_add(x: &[f64], h: &[f64], n: usize) -> Vec<f64> {
    let out_len = x.len() + h.len() - 1;
    let block = n - h.len() + 1;
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut buf = vec![0.0; n];
    buf[..h.len()].copy_from_slice(h);
    let mut hs = fwd.make_output_vec();
    fwd.process(&mut buf, &mut hs).expect("fft length");

    let mut spec: Vec<Complex<f64>> = fwd.make_output_vec();
    let mut out = vec![0.0; out_len];
    let scale = 1.0 / n as f64;
    for start in (0..x.len()).step_by(block) {
        let chunk = &x[start..(start + block).min(x.len())];
        buf.fill(0.0);
        buf[..chunk.len()].copy_from_slice(chunk);
        fwd.process(&mut buf, &mut spec).expect("fft length");
        for (a, b) in spec.iter_mut().zip(&hs) {
            *a *= b;
        }
        inv.process(&mut spec, &mut buf).expect("fft length");
        let valid = (chunk.len() + h.len() - 1).min(out_len - start);
        for (o, v) in out[start..start + valid].iter_mut().zip(&buf) {
            *o += v * scale;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len() + h.len() - 1];
        for i in 0..x.len() {
            for j in 0..h.len() {
                y[i + j] += x[i] * h[j];
            }
        }
        y
    }

    #[test]
    fn hand_expansion() {
        assert_eq!(fast_convolve(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), vec![3.0, 10.0, 8.0]);
    }

    #[test]
    fn unit_impulse_is_identity() {
        let x: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(fast_convolve(&x, &[1.0]).unwrap(), x);
        assert_eq!(fast_convolve(&[1.0], &x).unwrap(), x);
    }

    #[test]
    fn empty_operands_fail() {
        assert!(fast_convolve(&[], &[1.0]).is_err());
        assert!(fast_convolve(&[1.0], &[]).is_err());
    }

    #[test]
    fn every_path_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // direct, single FFT, overlap-add
        for (n, m) in [(300, 20), (3000, 500), (40_000, 300), (200, 3000)] {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast = fast_convolve(&x, &h).unwrap();
            let slow = naive(&x, &h);
            assert_eq!(fast.len(), slow.len());
            let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "n={n} m={m} err={err}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn linear_in_the_signal(
            x in proptest::collection::vec(-1.0f64..1.0, 100..400),
            seed in 0u64..1000,
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let k: Vec<f64> = (0..150).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = fast_convolve(&mix, &k).unwrap();
            let cx = fast_convolve(&x, &k).unwrap();
            let cy = fast_convolve(&y, &k).unwrap();
            for i in 0..lhs.len() {
                prop_assert!((lhs[i] - (a * cx[i] + b * cy[i])).abs() < 1e-9);
            }
        }
    }
}
