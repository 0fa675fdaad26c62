use tcfm::domains::maze::{MazeSpec, MEDIUM_MAZE, U_MAZE};
use tcfm::metrics::{ade, collision_rate, mae_rmse_per_dim, maze_reward, maze_score, min_ade};
use tcfm::trajectory::Trajectory;
use tcfm::TcfmError;

fn line(h: usize, f: impl Fn(usize) -> Vec<f64>) -> Trajectory {
    Trajectory::from_rows(&(0..h).map(f).collect::<Vec<_>>()).unwrap()
}

fn shifted(t: &Trajectory, dx: f64, dy: f64) -> Trajectory {
    t.map_states(|_, s| vec![s[0] + dx, s[1] + dy]).unwrap()
}

#[test]
fn ade_examples() {
    let truth = line(10, |i| vec![i as f64, 0.5 * i as f64]);
    assert_eq!(ade(&[truth.clone()], &truth).unwrap().value, 0.0);
    assert_eq!(ade(&[shifted(&truth, 1.0, 0.0)], &truth).unwrap().value, 1.0);
    let two = ade(&[shifted(&truth, 1.0, 0.0), shifted(&truth, 3.0, 0.0)], &truth).unwrap();
    assert_eq!(two.value, 2.0);
    assert_eq!(two.curve, vec![2.0; 10]);
    assert_eq!(min_ade(&[shifted(&truth, 1.0, 0.0), shifted(&truth, 3.0, 0.0)], &truth).unwrap(), 1.0);
    assert!(matches!(ade(&[], &truth), Err(TcfmError::Usage(_))));
}

#[test]
fn ade_scalar_is_mean_of_curve_and_order_free() {
    let truth = line(7, |i| vec![(i as f64).sin(), (i as f64).cos()]);
    let samples: Vec<Trajectory> = (0..4).map(|k| line(7, |i| vec![k as f64 * 0.3 + i as f64 * 0.1, -(k as f64)])).collect();
    let a = ade(&samples, &truth).unwrap();
    let mean = a.curve.iter().sum::<f64>() / 7.0;
    assert!((a.value - mean).abs() < 1e-15);
    let mut rev = samples.clone();
    rev.reverse();
    assert!((ade(&rev, &truth).unwrap().value - a.value).abs() < 1e-14);

    // Translation invariance and linear scaling.
    let moved: Vec<Trajectory> = samples.iter().map(|s| shifted(s, 12.5, -3.0)).collect();
    assert!((ade(&moved, &shifted(&truth, 12.5, -3.0)).unwrap().value - a.value).abs() < 1e-12);
    let scale = |t: &Trajectory| t.map_states(|_, s| s.iter().map(|v| 4.0 * v).collect()).unwrap();
    let scaled: Vec<Trajectory> = samples.iter().map(scale).collect();
    assert!((ade(&scaled, &scale(&truth)).unwrap().value - 4.0 * a.value).abs() < 1e-12);
}

#[test]
fn mae_rmse_examples() {
    let truth = line(5, |i| vec![i as f64, 1.0, -2.0]);
    let perfect = mae_rmse_per_dim(&[truth.clone()], &truth, &[0, 2, 4]).unwrap();
    assert!(perfect.iter().all(|e| e.mae == 0.0 && e.rmse == 0.0));

    let plus2 = truth.map_states(|_, s| vec![s[0] + 2.0, s[1], s[2]]).unwrap();
    for e in mae_rmse_per_dim(&[plus2], &truth, &[1, 3]).unwrap() {
        let want = if e.dim == 0 { 2.0 } else { 0.0 };
        assert_eq!((e.mae, e.rmse), (want, want));
    }

    let a = truth.map_states(|_, s| vec![s[0] + 1.0, s[1], s[2]]).unwrap();
    let b = truth.map_states(|_, s| vec![s[0] - 3.0, s[1], s[2]]).unwrap();
    let rows = mae_rmse_per_dim(&[a, b], &truth, &[2]).unwrap();
    assert_eq!(rows[0].mae, 2.0);
    assert_eq!(rows[0].rmse, 5f64.sqrt());
    assert!(matches!(mae_rmse_per_dim(&[truth.clone()], &truth, &[5]), Err(TcfmError::Usage(_))));
}

#[test]
fn expert_scores_100_on_bundled_mazes() {
    for text in [U_MAZE, MEDIUM_MAZE] {
        let maze = MazeSpec::parse(text).unwrap();
        let free = maze.free_cells();
        for &s in &free {
            for &g in &free {
                let goal = maze.cell_center(g);
                let expert = maze.expert_path(maze.cell_center(s), goal, 48).unwrap();
                assert_eq!(maze_score(&expert, goal, &expert, &maze).unwrap(), 100.0);
            }
        }
    }
}

#[test]
fn maze_score_examples() {
    let maze = MazeSpec::parse("########\n#......#\n########\n").unwrap();
    let goal = [6.5, 1.5];
    // The expert walks half a cell per step and waits at the goal.
    let expert = line(21, |k| vec![(1.5 + 0.5 * k as f64).min(6.5), 1.5]);
    let fast = line(21, |k| vec![(1.5 + 1.0 * k as f64).min(6.5), 1.5]);
    let idle = line(21, |_| vec![1.5, 1.5]);
    assert_eq!(maze_reward(&expert, goal, &maze), 13);
    // Golden value from the reference reward implementation.
    assert!((maze_score(&fast, goal, &expert, &maze).unwrap() - 130.769_230_769_230_77).abs() < 1e-9);
    assert_eq!(maze_score(&idle, goal, &expert, &maze).unwrap(), 0.0);

    // Jumping through the wall truncates the reward at the collision.
    let through = line(21, |k| if k < 3 { vec![1.5, 1.5] } else { vec![6.5, 0.5] });
    assert_eq!(maze_reward(&through, goal, &maze), 0);
    assert!(matches!(maze_score(&fast, [0.5, 0.5], &expert, &maze), Err(TcfmError::Config(_))));
}

#[test]
fn maze_score_is_capped() {
    let maze = MazeSpec::parse("#####\n#...#\n#####\n").unwrap();
    let goal = [3.5, 1.5];
    let late = line(10, |k| vec![if k == 9 { 3.5 } else { 1.5 }, 1.5]);
    let there = line(10, |_| vec![3.5, 1.5]);
    assert_eq!(maze_score(&there, goal, &late, &maze).unwrap(), 150.0);
}

#[test]
fn collision_rate_examples() {
    let maze = MazeSpec::parse("#######\n#.....#\n#.....#\n#######\n").unwrap();
    let inside = line(4, |i| vec![1.5 + i as f64, 1.5]);
    let through_wall = line(4, |i| vec![1.5 + i as f64, 0.5]);
    assert_eq!(collision_rate(&[inside.clone(), inside.clone()], &maze), 0.0);
    assert_eq!(collision_rate(&[through_wall.clone()], &maze), 1.0);
    let mut batch = vec![inside; 7];
    batch.extend(vec![through_wall; 3]);
    assert_eq!(collision_rate(&batch, &maze), 0.3);
}
