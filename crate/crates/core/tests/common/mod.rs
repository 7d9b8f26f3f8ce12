#![allow(dead_code)]

use cmr_autograd::{ParamStore, Tensor};
use cmr_recon::phantom::{simulate_subject, ContrastTag, PhantomSpec};
use cmr_recon::sampling::{make_mask, Trajectory};
use cmr_recon::trainer::{Example, Subject};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn phantom_subject(i: u64, seed: u64, size: usize, frames: usize, coils: usize) -> Subject {
    let contrast = ContrastTag::ALL[i as usize % ContrastTag::ALL.len()];
    let spec = PhantomSpec::cardiac(size, size, frames, coils, contrast, seed * 100 + i);
    Subject {
        name: format!("s{i}"),
        record: simulate_subject(&spec).unwrap(),
    }
}

pub fn subjects(range: std::ops::Range<u64>, seed: u64, size: usize, frames: usize, coils: usize) -> Vec<Subject> {
    range.map(|i| phantom_subject(i, seed, size, frames, coils)).collect()
}

pub fn example(subject: &Subject, index: usize, frame: usize, af: f64, acs: usize, adjacent: usize, seed: u64) -> Example {
    let (_, _, h, w) = subject.record.dims();
    let mask = make_mask(Trajectory::Uniform, h, w, af, acs, seed).unwrap();
    Example::new(&subject.record, index, frame, vec![mask], adjacent).unwrap()
}

/// Replaces every parameter with `N(0, std²)` draws, keeping `keep` prefixes.
pub fn randomize(store: &ParamStore, seed: u64, std: f64, keep: &[&str]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, p) in store.entries() {
        if keep.iter().any(|k| name.starts_with(k)) {
            continue;
        }
        p.set(Tensor::randn(&p.shape(), std, &mut rng));
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
