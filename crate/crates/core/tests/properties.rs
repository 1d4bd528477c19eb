use num_complex::Complex32;
use proptest::prelude::*;
use radarim::ccnn::{
    bn_forward, conv_forward, BnParams, ConvParams, Mode, Model, ModelSpec, PadMode, Planes,
};
use radarim::dsp::{self, PowerMap, RdMap};
use radarim::metrics::{cacfar, ppmse, CfarConfig, Peak};
use radarim::mitigate::{imat, ramp_filter, zeroing, ImatParams, InterferenceMask};
use radarim::sim::{sample_interferers, synthesize_interferer, RadarConfig};
use radarim::tensor::ComplexTensor;
use radarim::train::TrainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tensor(shape: &[usize], seed: u64) -> ComplexTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexTensor::from_fn(shape, |_| {
        Complex32::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn planes(shape: &[usize], seed: u64) -> Planes<f64> {
    Planes::<f32>::from_tensor(&tensor(shape, seed)).cast()
}

fn mask(nr: usize, nd: usize, seed: u64, p: f64) -> InterferenceMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = InterferenceMask::empty(nr, nd);
    for n in 0..nr {
        for d in 0..nd {
            m.set(n, d, rng.random_bool(p));
        }
    }
    m
}

fn rel(a: &ComplexTensor, b: &ComplexTensor) -> f64 {
    (a.sub(b).unwrap().energy() / b.energy().max(1e-30)).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dsp_chain_is_linear(seed in 0u64..500, a in -2.0f32..2.0, b in -2.0f32..2.0) {
        let (x, y) = (tensor(&[12, 10, 4], seed), tensor(&[12, 10, 4], seed + 1));
        let mix = x.zip_with(&y, |p, q| p * a + q * b).unwrap();
        let lhs = dsp::time_to_rda(&mix).unwrap().0;
        let (fx, fy) = (dsp::time_to_rda(&x).unwrap().0, dsp::time_to_rda(&y).unwrap().0);
        let rhs = fx.zip_with(&fy, |p, q| p * a + q * b).unwrap();
        prop_assert!(rel(&lhs, &rhs) < 1e-5);
    }

    #[test]
    fn rd_rda_roundtrip(seed in 0u64..500, na in 1usize..20) {
        let rd = RdMap(tensor(&[6, 5, na], seed));
        let back = dsp::rda_to_rd(&dsp::rd_to_rda(&rd).unwrap()).unwrap();
        prop_assert!(rel(&back.0, &rd.0) < 1e-6);
    }

    #[test]
    fn noncoherent_sum_ignores_angle_shifts(seed in 0u64..500, k in -16isize..16) {
        let t = tensor(&[5, 6, 8], seed);
        let a = dsp::noncoherent_sum(&t).unwrap();
        let b = dsp::noncoherent_sum(&t.circular_shift(2, k).unwrap()).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
        }
    }

    #[test]
    fn mitigators_respect_their_masks(seed in 0u64..500, p in 0.0f64..0.6) {
        let cube = tensor(&[16, 6, 3], seed);
        let m = mask(16, 6, seed, p);
        let z = zeroing(&cube, &m).unwrap();
        let i = imat(&cube, &m, ImatParams::default()).unwrap().cube;
        prop_assert!(z.energy() <= cube.energy());
        for n in 0..16 {
            for d in 0..6 {
                for a in 0..3 {
                    let idx = [n, d, a];
                    if m.get(n, d) {
                        prop_assert_eq!(z.get(&idx), Complex32::new(0.0, 0.0));
                    } else {
                        prop_assert_eq!(z.get(&idx), cube.get(&idx));
                        prop_assert_eq!(i.get(&idx), cube.get(&idx));
                    }
                }
            }
        }
        let empty = InterferenceMask::empty(16, 6);
        prop_assert_eq!(zeroing(&cube, &empty).unwrap(), cube.clone());
        prop_assert_eq!(imat(&cube, &empty, ImatParams::default()).unwrap().cube, cube);
    }

    #[test]
    fn ramp_filter_never_amplifies(seed in 0u64..500, alpha in 1.1f64..4.0) {
        let cube = tensor(&[8, 10, 2], seed);
        let out = ramp_filter(&cube, alpha).unwrap();
        for (o, i) in out.data().iter().zip(cube.data()) {
            prop_assert!(o.norm() <= i.norm() * (1.0 + 1e-6));
        }
    }

    #[test]
    fn cfar_is_scale_invariant(seed in 0u64..500, s in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = PowerMap::zeros(24, 20);
        for v in map.data.iter_mut() {
            *v = -rng.random::<f64>().ln();
        }
        map.set(5, 7, 60.0);
        let mut scaled = map.clone();
        scaled.data.iter_mut().for_each(|v| *v *= s);
        let cfg = CfarConfig { guard: 1, training: 3, pfa: 1e-2 };
        prop_assert_eq!(cacfar(&map, &cfg).unwrap(), cacfar(&scaled, &cfg).unwrap());
    }

    #[test]
    fn ppmse_is_bounded(seed in 0u64..500) {
        let (a, b) = (RdMap(tensor(&[4, 4, 3], seed)), RdMap(tensor(&[4, 4, 3], seed + 7)));
        let peaks = [Peak(0, 0), Peak(1, 3), Peak(3, 2)];
        let v = ppmse(&a, &b, &peaks).unwrap();
        prop_assert!((0.0..=std::f64::consts::PI.powi(2)).contains(&v));
    }

    #[test]
    fn mask_ignores_angle_of_arrival(seed in 0u64..500, aoa in -90.0f64..90.0) {
        let cfg = RadarConfig { n_range: 32, n_doppler: 16, n_antennas: 4,
                                sweep_duration: 16e-6 / 3.0, ..RadarConfig::default() };
        let ic = sample_interferers(seed, &cfg)[0].clone();
        let turned = radarim::sim::InterfererConfig { aoa, ..ic.clone() };
        prop_assert_eq!(synthesize_interferer(&ic, &cfg).unwrap().1, synthesize_interferer(&turned, &cfg).unwrap().1);
    }

    #[test]
    fn circular_conv_commutes_with_angle_shifts(seed in 0u64..200, k in 0usize..6) {
        let x = planes(&[1, 2, 5, 4, 6], seed);
        let mut p = ConvParams::<f64>::zeros(3, 2, [3, 3, 3]);
        p.weight = planes(p.weight.shape(), seed + 1);
        p.bias = planes(&[3], seed + 2);
        let pad = [PadMode::Zero, PadMode::Zero, PadMode::Circular];
        let shift = |t: &Planes<f64>| {
            let mut out = t.clone();
            for i in 0..t.len() {
                let j = i - i % 6 + (i % 6 + k) % 6;
                out.re[j] = t.re[i];
                out.im[j] = t.im[i];
            }
            out
        };
        let lhs = conv_forward(&shift(&x), &p, pad).unwrap();
        let rhs = shift(&conv_forward(&x, &p, pad).unwrap());
        for i in 0..lhs.len() {
            prop_assert!((lhs.re[i] - rhs.re[i]).abs() < 1e-12 && (lhs.im[i] - rhs.im[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_linear_layer_is_homogeneous(seed in 0u64..200, re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let spec = ModelSpec { batch_norm: false, ..ModelSpec::new_3d(&[1]) };
        let mut model = Model::<f64>::init(&spec, seed).unwrap();
        model.layers[0].conv.bias = Planes::zeros(&[1]);
        let x = planes(&[1, 1, 4, 4, 4], seed);
        let mut ax = x.clone();
        for i in 0..x.len() {
            ax.re[i] = re * x.re[i] - im * x.im[i];
            ax.im[i] = re * x.im[i] + im * x.re[i];
        }
        let (fx, fax) = (model.forward(&x, Mode::Eval).unwrap(), model.forward(&ax, Mode::Eval).unwrap());
        for i in 0..fx.len() {
            let (r, j) = (re * fx.re[i] - im * fx.im[i], re * fx.im[i] + im * fx.re[i]);
            prop_assert!((fax.re[i] - r).abs() < 1e-9 && (fax.im[i] - j).abs() < 1e-9);
        }
    }

    #[test]
    fn lr_schedule_never_increases(lr0 in 1e-5f64..1e-1, decay in 0.5f64..1.0) {
        let cfg = TrainConfig { lr0, lr_decay: decay, ..TrainConfig::default() };
        for e in 0..50 {
            prop_assert!(cfg.lr(e + 1) <= cfg.lr(e));
        }
    }
}

#[test]
fn batch_norm_output_statistics() {
    // whitened then scaled: zero mean, covariance Γ·Γᵀ
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 40_000;
    let mut x = Planes::<f64>::zeros(&[1, 1, n, 1, 1]);
    for i in 0..n {
        let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        x.re[i] = 3.0 + 2.0 * a;
        x.im[i] = -1.0 + 0.5 * a + 0.3 * b;
    }
    let mut p = BnParams::<f64>::new(1);
    // Γ = [[γrr, γri], [γri, γii]] = [[1.0, 0.3], [0.3, 0.6]]
    p.gamma = Planes::from_parts(&[1, 2], vec![1.0, 0.3], vec![0.6, 0.0]).unwrap();
    let (y, _) = bn_forward(&x, &p, Mode::Train).unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mr, mi) = (mean(&y.re), mean(&y.im));
    assert!(mr.abs() < 1e-6 && mi.abs() < 1e-6);
    let cov = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / n as f64;
    let (vrr, vri, vii) = (cov(&y.re, &y.re), cov(&y.re, &y.im), cov(&y.im, &y.im));
    let expect = [
        1.0 * 1.0 + 0.3 * 0.3,
        1.0 * 0.3 + 0.3 * 0.6,
        0.3 * 0.3 + 0.6 * 0.6,
    ];
    for (got, want) in [vrr, vri, vii].into_iter().zip(expect) {
        assert!((got - want).abs() <= 0.05 * want, "{got} vs {want}");
    }
}
