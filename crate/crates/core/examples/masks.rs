//! Builds every trajectory at a few acceleration factors and prints the
//! achieved acceleration, plus an ASCII view of one mask per trajectory.
//!
//! `cargo run --example masks -- [size]`

use cmr_recon::sampling::{make_mask, make_uniform_frame_masks, Trajectory};

fn main() -> cmr_recon::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(128);
    println!("{:<14} {:>4} {:>9} {:>8}", "trajectory", "AF", "achieved", "samples");
    for traj in Trajectory::ALL {
        for af in [4.0, 8.0, 10.0, 12.0, 16.0, 20.0, 24.0] {
            let m = make_mask(traj, n, n, af, 0, 1)?;
            println!("{:<14} {:>4} {:>9.2} {:>8}", traj.to_string(), af, m.achieved_acceleration(), m.sampled());
        }
    }

    for traj in Trajectory::ALL {
        let m = make_mask(traj, 24, 48, 6.0, 6, 2)?;
        println!("\n{traj}, AF 6, 6 ACS columns:");
        for row in m.data().rows() {
            println!("{}", row.iter().map(|&v| if v == 1 { '#' } else { '.' }).collect::<String>());
        }
    }

    let frames = make_uniform_frame_masks(8, 16, 4.0, 4, 3)?;
    println!("\nper-frame uniform masks shift their offset:");
    for m in &frames {
        println!("{:?}", m.sampled_columns());
    }
    Ok(())
}
