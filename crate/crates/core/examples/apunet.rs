//! Runs the prompt UNet on random input and inspects its prompt weights
//! and attention gates.
//!
//! `cargo run --example apunet`

use cmr_autograd::{ParamStore, Tensor, Var};
use cmr_recon::apunet::{Apunet, ApunetConfig};
use rand::SeedableRng;

fn main() -> cmr_recon::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for (name, cfg) in [("tiny", ApunetConfig::tiny()), ("default", ApunetConfig::default())] {
        let store = ParamStore::new(1);
        let net = Apunet::new(&store.root().pp("apunet"), &cfg)?;
        println!(
            "{name}: {} levels, {} tensors, {} parameters",
            cfg.levels,
            store.len(),
            store.num_elements()
        );
        let x = Var::constant(Tensor::randn(&[1, cfg.in_channels, 30, 26], 1.0, &mut rng));
        let y = net.forward(&x)?;
        let corr = net.correction(&x)?;
        println!(
            "  output {:?}; correction max |f(x)| = {:.1e} (zero-initialised tail)",
            y.shape(),
            corr.value().max_abs()
        );
        for (i, p) in net.prompt_blocks().iter().enumerate() {
            let feats = Var::constant(Tensor::randn(&[1, p.bank().shape()[1], 8, 8], 1.0, &mut rng));
            let w = p.weights(&feats);
            let w: Vec<String> = w.value().data().iter().map(|v| format!("{v:.3}")).collect();
            println!("  prompt {i}: bank {:?}, weights [{}]", p.bank().shape(), w.join(", "));
        }
    }
    Ok(())
}
