use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn sdcouple(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sdcouple"));
    cmd.args(args).env_remove("SDCOUPLE_OUT_DIR");
    cmd
}

fn run(args: &[&str]) -> Output {
    sdcouple(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn two_level_convergence_csv_has_rates_on_the_second_row() {
    let o = run(&["converge", "--pair", "mini", "--nmin", "8", "--nmax", "16", "--format", "csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("DOF,h,e(u_S),r(u_S)"));
    let first: Vec<&str> = lines[1].split(',').collect();
    let second: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(first[0], "543");
    assert_eq!(second[0], "2043");
    assert!(first[3].is_empty());
    for k in [3, 5, 7, 9] {
        let r: f64 = second[k].parse().unwrap();
        assert!(r > 0.5, "{}", lines[2]);
    }
}

#[test]
fn one_combo_gives_one_data_column() {
    let o = run(&["iterations", "--pair", "th-rt1", "--nmin", "8", "--nmax", "8", "--combo", "bpx:hx", "--format", "csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "DOF,h,bpx:hx");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("887,1/8,"));
}

#[test]
fn output_directory_from_the_environment() {
    let dir = scratch("env_out");
    let o = sdcouple(&["oracle", "--pair", "p2isop1", "--nmin", "8", "--nmax", "8"])
        .env("SDCOUPLE_OUT_DIR", &dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let table = fs::read_to_string(dir.join("oracle_p2isop1-bdm1.csv")).unwrap();
    let row: Vec<&str> = table.lines().nth(1).unwrap().split(',').collect();
    for d in &row[2..6] {
        assert!(d.parse::<f64>().unwrap() < 1e-6);
    }
}

#[test]
fn config_file_supplies_unset_flags() {
    let dir = scratch("config");
    let cfg = dir.join("run.conf");
    fs::write(&cfg, "# small run\npair = mini-bdm1\nnmin = 4\nnmax = 8\nformat = markdown\n").unwrap();
    let o = run(&["converge", "--config", cfg.to_str().unwrap(), "--nmax", "4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("| DOF"));
    assert!(text.contains("1/4"));
    assert!(!text.contains("1/8"));
}

#[test]
fn bad_arguments_exit_with_code_two() {
    assert_eq!(run(&["converge", "--pair", "foo"]).status.code(), Some(2));
    assert_eq!(run(&["iterations", "--combo", "direct"]).status.code(), Some(2));
    let dir = scratch("bad_config");
    let cfg = dir.join("bad.conf");
    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(run(&["converge", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let args = ["converge", "--pair", "th", "--nmin", "4", "--nmax", "8", "--format", "csv"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}
