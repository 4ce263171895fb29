// debug: one-sided slope comparison for worst coordinates
use itm_core::crf::ResponseCurve;
use itm_core::hisn::{build_network, ForwardOptions, HisnConfig, Variant};
use itm_core::img::HdrImage;
use itm_core::mask::compute_mask;
use itm_core::pipeline::{synthesize_pair, NoiseParams};
use itm_core::tensor::gradcheck::relative_error;
use itm_core::tensor::{Tape, Tensor};
use itm_core::train::{loss_on_tape, TargetVars};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let cfg = HisnConfig { fusion_width: 16, global_depth: 3, seed: 1234, ..HisnConfig::toy() };
    let mut net = build_network::<f64>(cfg);
    let mut jitter = ChaCha8Rng::seed_from_u64(555);
    for idx in 0..net.store.len() {
        for v in net.store.get_mut(idx).data_mut() { *v += jitter.gen_range(-0.05..0.05); }
    }
    let net = net;
    let e = cfg.input_extent();
    let plane = e * e;
    let mut hdr = vec![0.0f32; plane * 3];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for c in 0..3 {
        for i in 0..plane { hdr[c * plane + i] = rng.gen_range(0.0..0.9); }
        for y in 4..12 { for x in 4..12 { hdr[c * plane + y * e + x] = rng.gen_range(1.5..3.0); } }
    }
    let hdr = HdrImage::new(e, e, hdr).unwrap();
    let pair = synthesize_pair(&hdr, 1.0, &ResponseCurve::gamma(2.2), &NoiseParams::none(), None).unwrap();
    let mask = compute_mask(&pair.ldr, 0.95).unwrap();
    let (input_t, mask_t) = (pair.ldr.to_tensor::<f64>(), mask.to_tensor::<f64>());
    let (dim_t, bright_t, nl_t) = (pair.dim_target.to_tensor::<f64>(), pair.bright_target.to_tensor::<f64>(), pair.nonlinear_target.to_tensor::<f64>());

    let loss_with = |ovr: Option<(usize, &Tensor<f64>)>| -> (f64, Vec<Tensor<f64>>) {
        let mut net = net.clone();
        if let Some((idx, t)) = ovr { *net.store.get_mut(idx) = t.clone(); }
        let mut tape = Tape::new();
        let input = tape.input(input_t.clone(), false);
        let mvar = tape.input(mask_t.clone(), false);
        let targets = TargetVars { dim: tape.input(dim_t.clone(), false), bright: tape.input(bright_t.clone(), false), nonlinear: Some(tape.input(nl_t.clone(), false)) };
        let pvars = net.load_params(&mut tape, ovr.is_none());
        let fwd = net.forward_on_tape(&mut tape, input, mvar, &pvars, ForwardOptions::default()).unwrap();
        let loss = loss_on_tape(&mut tape, &fwd, &targets, Variant::Default, 1.0, 5000.0).unwrap();
        if ovr.is_some() { return (tape.value(loss.total).item(), Vec::new()); }
        let grads = tape.backward(loss.total).unwrap();
        (tape.value(loss.total).item(), pvars.iter().map(|&v| grads.wrt_or_zeros(v)).collect())
    };

    let (l0, analytic) = loss_with(None);
    let mut pick = ChaCha8Rng::seed_from_u64(4321);
    for idx in 0..net.store.len() {
        let base = net.store.get(idx).clone();
        let coord = pick.gen_range(0..base.numel());
        for eps in [1e-6f64] {
            let mut probe = base.clone();
            probe.data_mut()[coord] = base.data()[coord] + eps;
            let fp = loss_with(Some((idx, &probe))).0;
            probe.data_mut()[coord] = base.data()[coord] - eps;
            let fm = loss_with(Some((idx, &probe))).0;
            let slope_p = (fp - l0) / eps;
            let slope_m = (l0 - fm) / eps;
            let central = (fp - fm) / (2.0 * eps);
            let a = analytic[idx].data()[coord];
            let err: f64 = relative_error(a, central);
            if err > 1e-4 {
                println!("{} c{coord}: analytic {a:.8e} central {central:.8e} slope+ {slope_p:.8e} slope- {slope_m:.8e} rel {err:.2e}", net.store.name(idx));
            }
        }
    }
    println!("done");
}
