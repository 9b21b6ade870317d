use std::path::Path;
use std::process::{Command, Output};

const HEADER: &str = "level,dofs,h_max,err_u,err_sigma,err_u_post,eta,eoc_u,eoc_sigma,eoc_post,eoc_eta";

fn dpg_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpg-lab")).args(args).output().expect("binary runs")
}

fn run(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    dpg_lab(&args)
}

#[test]
fn writes_a_convergence_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("square.csv");
    let res = run(&out, &["--problem", "square", "--p", "1", "--levels", "3", "--postprocess"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], HEADER);
    assert_eq!(lines.len(), 4);
    assert!(!text.contains('\r'));
    for (level, line) in lines[1..].iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 11);
        assert_eq!(cells[0], level.to_string());
        for cell in &cells[2..7] {
            cell.parse::<f64>().unwrap();
        }
        // No rate on the first level.
        assert_eq!(cells[7..].iter().all(|c| c.is_empty()), level == 0);
    }
    assert!(String::from_utf8_lossy(&res.stderr).contains("slopes"));
}

#[test]
fn missing_postprocessing_leaves_empty_cells() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plain.csv");
    let res = run(&out, &["--problem", "lshape", "--p", "0", "--levels", "2", "--trial", "augmented"]);
    assert_eq!(res.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert!(cells[5].is_empty() && cells[9].is_empty());
    }
}

#[test]
fn sequential_runs_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--problem", "lshape", "--p", "1", "--mode", "adaptive", "--levels", "6", "--postprocess", "--seq"];
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert_eq!(run(&a, &args).status.code(), Some(0));
    assert_eq!(run(&b, &args).status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn bad_configuration_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    for extra in [
        &["--problem", "square", "--p", "0", "--mode", "adaptive", "--theta", "1.5"][..],
        &["--problem", "square", "--p", "0", "--levels", "0"],
        &["--problem", "square", "--p", "15"],
        &["--problem", "circle", "--p", "0"],
        &["--problem", "square"],
    ] {
        assert_eq!(run(&out, extra).status.code(), Some(2), "{extra:?}");
    }
    let res = run(&dir.path().join("missing/x.csv"), &["--problem", "square", "--p", "0"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_3_and_keeps_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let res = run(&out, &["--problem", "square", "--p", "0", "--levels", "2", "--solver-tol", "1e-300"]);
    assert_eq!(res.status.code(), Some(3));
    assert_eq!(std::fs::read_to_string(&out).unwrap().trim_end(), HEADER);
}

#[test]
fn mesh_subcommand_writes_a_readable_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mesh.txt");
    let res = dpg_lab(&["mesh", "--problem", "lshape", "--levels", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let mesh = dpglab::Mesh::read_from(std::io::BufReader::new(std::fs::File::open(&out).unwrap())).unwrap();
    assert_eq!(mesh.num_elements(), 6 * 16);
    assert!((mesh.area() - 3.0).abs() < 1e-14);

    let res = dpg_lab(&["mesh", "--problem", "square"]);
    assert_eq!(res.status.code(), Some(0));
    assert!(!res.stdout.is_empty());
}
