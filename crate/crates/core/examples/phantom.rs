//! Simulates a multi-coil cine phantom, writes it to HDF5 and reads it back.
//!
//! `cargo run --example phantom -- [out.h5]`

use cmr_recon::phantom::{read_subject, simulate_subject, write_subject, ContrastTag, PhantomSpec};
use cmr_recon::sampling::{make_mask, Trajectory};

fn main() -> cmr_recon::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "phantom_example.h5".into());
    for contrast in ContrastTag::ALL {
        let rec = simulate_subject(&PhantomSpec::cardiac(64, 64, 6, 4, contrast, 9))?;
        let peaks: Vec<String> = rec
            .image_rss
            .outer_iter()
            .map(|f| format!("{:.3}", f.iter().copied().fold(0.0f32, f32::max)))
            .collect();
        println!("{contrast:<8} frame peaks {}", peaks.join(" "));
    }

    let spec = PhantomSpec {
        noise_std: 0.01,
        ..PhantomSpec::cardiac(64, 64, 8, 4, ContrastTag::Cine, 1)
    };
    let rec = simulate_subject(&spec)?;
    println!("dims {:?}, consistency error {:.2e}", rec.dims(), rec.consistency_error());

    write_subject(&rec, &out)?;
    let back = read_subject(&out)?;
    println!("wrote {out}; roundtrip identical: {}", back == rec);

    let mask = make_mask(Trajectory::Uniform, 64, 64, 4.0, 16, 0)?;
    let (k0, kg) = cmr_recon::phantom::make_training_example(&rec, 0, &mask, 5)?;
    let kept = k0.data().iter().filter(|v| v.norm() > 0.0).count() as f64 / kg.data().len() as f64;
    println!("training pair for frame 0: {:?}, {:.1}% of samples kept", k0.dims(), 100.0 * kept);
    Ok(())
}
