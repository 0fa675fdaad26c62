//! Loading trajectories from CSV (`traj_id,t,dim_0..`): rows are grouped by
//! id, resampled onto a fixed number of evenly spaced times, and malformed
//! input is rejected with the offending line.
//!
//! `cargo run --example csv_ingest`

use tcfm::domains::csv_io::{read_trajectory_csv, write_trajectory_csv, CsvSchema};

const TRACKS: &str = "\
traj_id,t,dim_0,dim_1
a,0.0,0.0,0.0
a,0.5,1.0,0.0
a,2.0,1.0,3.0
b,10,5.0,5.0
b,11,4.0,6.0
b,12,3.0,7.0
b,13,2.0,8.0
";

fn main() -> tcfm::Result<()> {
    let schema = CsvSchema { state_dim: Some(2), horizon: 5 };
    let loaded = read_trajectory_csv(TRACKS.as_bytes(), &schema)?;
    for (id, traj) in loaded.ids.iter().zip(&loaded.trajectories) {
        let states: Vec<String> = traj.states().map(|s| format!("({:.2}, {:.2})", s[0], s[1])).collect();
        println!("{id}: {}", states.join(" "));
    }

    let mut out = vec![];
    write_trajectory_csv(&mut out, &loaded.trajectories)?;
    println!("\nre-exported:\n{}", String::from_utf8_lossy(&out));

    for bad in [
        "traj_id,t,dim_0,dim_1\na,0,1,NaN\n",
        "traj_id,t,dim_0,dim_1\na,1,0,0\na,0,1,1\n",
        "traj_id,t,dim_0\na,0,1\n",
    ] {
        match read_trajectory_csv(bad.as_bytes(), &schema) {
            Ok(_) => println!("accepted?"),
            Err(e) => println!("rejected: {e}"),
        }
    }
    Ok(())
}
