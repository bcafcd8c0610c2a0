mod common;

use common::{compare_with_golden, golden_dir, read_dir_files, run_case, GOLDEN_CASES};

/// Set `MFRAME_WRITE_GOLDENS=1` to regenerate `tests/golden/`.
#[test]
fn csv_outputs_match_goldens() {
    let tmp = tempfile::tempdir().unwrap();
    let mut problems = Vec::new();
    for case in GOLDEN_CASES {
        let out = tmp.path().join(case.name);
        run_case(case, &out, 2).unwrap();
        if std::env::var_os("MFRAME_WRITE_GOLDENS").is_some() {
            let dir = golden_dir(case);
            let _ = std::fs::remove_dir_all(&dir);
            std::fs::create_dir_all(&dir).unwrap();
            for (name, bytes) in read_dir_files(&out) {
                std::fs::write(dir.join(name), bytes).unwrap();
            }
        }
        problems.extend(compare_with_golden(case, &out));
    }
    assert!(problems.is_empty(), "{problems:#?}");
}
