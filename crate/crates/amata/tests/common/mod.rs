//! Shared fixtures and oracles for the integration suites.

use std::path::PathBuf;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use amata::{load_mnist_idx, save_idx, Dataset, MlpSpec, Params, Tensor};

/// Segment masks of a seven-segment display, indexed A..G.
const SEGMENTS: [(usize, usize, usize, usize); 7] = [
    // (row_start, row_end, col_start, col_end), half-open.
    (3, 8, 8, 20),    // A top bar
    (4, 14, 16, 21),  // B top right
    (14, 24, 16, 21), // C bottom right
    (20, 25, 8, 20),  // D bottom bar
    (14, 24, 7, 12),  // E bottom left
    (4, 14, 7, 12),   // F top left
    (12, 16, 8, 20),  // G middle bar
];

const DIGIT_SEGMENTS: [&[usize]; 10] = [
    &[0, 1, 2, 3, 4, 5],    // 0
    &[1, 2],                // 1
    &[0, 1, 6, 4, 3],       // 2
    &[0, 1, 6, 2, 3],       // 3
    &[5, 6, 1, 2],          // 4
    &[0, 5, 6, 2, 3],       // 5
    &[0, 5, 6, 4, 3, 2],    // 6
    &[0, 1, 2],             // 7
    &[0, 1, 2, 3, 4, 5, 6], // 8
    &[0, 1, 2, 3, 5, 6],    // 9
];

/// Renders one jittered glyph into a 28x28 canvas.
fn render_digit(digit: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut canvas = vec![0.0f64; 28 * 28];
    let dy = rng.random_range(-1i32..=1);
    let dx = rng.random_range(-2i32..=2);
    for &seg in DIGIT_SEGMENTS[digit] {
        let (r0, r1, c0, c1) = SEGMENTS[seg];
        let intensity = 0.95 + 0.05 * rng.random::<f64>();
        for r in r0..r1 {
            for c in c0..c1 {
                let rr = r as i32 + dy;
                let cc = c as i32 + dx;
                if (0..28).contains(&rr) && (0..28).contains(&cc) {
                    let idx = rr as usize * 28 + cc as usize;
                    canvas[idx] = canvas[idx].max(intensity);
                }
            }
        }
    }
    for v in canvas.iter_mut() {
        *v = (*v + 0.03 * rng.random::<f64>()).clamp(0.0, 1.0);
    }
    canvas
}

/// A digits-style image dataset: 10 glyph classes on 28x28 canvases with
/// translation jitter, stroke-intensity variation, and background noise.
/// Labels cycle 0..9 so every prefix is class-balanced.
pub fn sevenseg_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * 784);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let digit = i % 10;
        data.extend_from_slice(&render_digit(digit, &mut rng));
        labels.push(digit);
    }
    Dataset::new(Tensor::from_vec(vec![n, 784], data).unwrap(), labels, 10).unwrap()
}

/// Train/test digit sets (2000/1000), written to disk as an IDX pair and
/// read back through the loader, shared across the suite.
pub fn digits_train_test() -> &'static (Dataset, Dataset) {
    static DATA: OnceLock<(Dataset, Dataset)> = OnceLock::new();
    DATA.get_or_init(|| {
        let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("digits-idx");
        std::fs::create_dir_all(&dir).expect("create fixture dir");
        let train = sevenseg_dataset(2000, 0xD161);
        let test = sevenseg_dataset(1000, 0xD162);
        let paths = [
            (train, dir.join("train-images.idx"), dir.join("train-labels.idx")),
            (test, dir.join("test-images.idx"), dir.join("test-labels.idx")),
        ];
        let mut loaded = Vec::new();
        for (set, img, lbl) in paths {
            save_idx(&set, &img, &lbl).expect("write fixture");
            loaded.push(load_mnist_idx::<f64>(&img, &lbl).expect("read fixture"));
        }
        let test = loaded.pop().unwrap();
        let train = loaded.pop().unwrap();
        (train, test)
    })
}

/// Central-difference gradient check of the model loss against the reverse
/// pass: every parameter and input component, step 1e-5, relative error
/// below `rtol` with a small absolute floor for near-zero components.
pub fn fd_gradients_match(params: &Params, x: &Tensor, y: &[usize], rtol: f64, atol: f64) -> bool {
    let h = 1e-5;
    let loss_at = |p: &Params, xv: &Tensor| -> f64 {
        amata::loss_and_grads(p, xv, y, amata::Wrt::ParamsOnly).unwrap().0
    };
    let (_, grads) = amata::loss_and_grads(params, x, y, amata::Wrt::Both).unwrap();
    let grad_params = grads.params.unwrap().flatten();
    let grad_input = grads.input.unwrap();

    let sizes = params.layer_sizes();
    let flat = params.flatten();
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        plus[i] += h;
        let mut minus = flat.clone();
        minus[i] -= h;
        let fp = loss_at(&Params::unflatten(&sizes, &plus).unwrap(), x);
        let fm = loss_at(&Params::unflatten(&sizes, &minus).unwrap(), x);
        let fd = (fp - fm) / (2.0 * h);
        let ad = grad_params[i];
        if (ad - fd).abs() > rtol * ad.abs().max(fd.abs()) + atol {
            eprintln!("param component {i}: ad {ad} vs fd {fd}");
            return false;
        }
    }
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let fd = (loss_at(params, &plus) - loss_at(params, &minus)) / (2.0 * h);
        let ad = grad_input.data()[i];
        if (ad - fd).abs() > rtol * ad.abs().max(fd.abs()) + atol {
            eprintln!("input component {i}: ad {ad} vs fd {fd}");
            return false;
        }
    }
    true
}

/// Smallest |pre-activation| over all relu inputs: instances this close to a
/// kink are rejected before finite differencing (the difference step is 1e-5;
/// central differences are only valid away from the kink).
pub fn min_preactivation_margin(params: &Params, x: &Tensor) -> f64 {
    let mut h = x.clone();
    let mut margin = f64::INFINITY;
    let last = params.layers().len() - 1;
    for (i, layer) in params.layers().iter().enumerate() {
        let mut pre = Vec::with_capacity(h.rows() * layer.weight.cols());
        for r in 0..h.rows() {
            for c in 0..layer.weight.cols() {
                let mut acc = layer.bias.data()[c];
                for k in 0..layer.weight.rows() {
                    acc += h.at(r, k) * layer.weight.at(k, c);
                }
                pre.push(acc);
            }
        }
        if i != last {
            for &v in &pre {
                margin = margin.min(v.abs());
            }
        }
        let relu = i != last;
        h = Tensor::from_vec(
            vec![h.rows(), layer.weight.cols()],
            pre.into_iter()
                .map(|v| if relu && v < 0.0 { 0.0 } else { v })
                .collect(),
        )
        .unwrap();
    }
    margin
}

/// Draws a random small model + batch, rejecting draws whose pre-activations
/// sit within `margin` of a relu kink. Deterministic in the seed.
pub fn random_fd_instance(seed: u64, margin: f64) -> (MlpSpec, Params, Tensor, Vec<usize>) {
    let shapes: [&[usize]; 4] = [
        &[4, 7, 3],
        &[5, 8, 6, 3],
        &[6, 10, 4],
        &[3, 5, 2],
    ];
    let mut attempt = 0u64;
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt.wrapping_mul(0x9e3779b97f4a7c15)));
        let sizes = shapes[rng.random_range(0..shapes.len())].to_vec();
        let spec = MlpSpec::new(sizes.clone(), rng.random::<u64>()).unwrap();
        let params: Params = amata::init_params(&spec);
        let batch = rng.random_range(2..5usize);
        let dim = sizes[0];
        let x = Tensor::from_vec(
            vec![batch, dim],
            (0..batch * dim).map(|_| rng.random::<f64>()).collect(),
        )
        .unwrap();
        let y: Vec<usize> = (0..batch)
            .map(|_| rng.random_range(0..*sizes.last().unwrap()))
            .collect();
        if min_preactivation_margin(&params, &x) > margin {
            return (spec, params, x, y);
        }
        attempt += 1;
    }
}

/// One pass/fail line per criterion, visible under `--nocapture`.
pub fn report(number: u32, name: &str, detail: &str) {
    println!("ACCEPTANCE {number:02} {name}: PASS ({detail})");
}
