#![no_main]
use libfuzzer_sys::fuzz_target;
use semirobin::mesh::{build_interval_mesh, build_rectangle_mesh};

fuzz_target!(|data: &[u8]| {
    let line = build_interval_mesh(0.0, 1.0, 5).unwrap();
    let square = build_rectangle_mesh(1.0, 1.0, 3, 3).unwrap();
    let _ = semirobin::io::read_solution_csv(data, &line);
    let _ = semirobin::io::read_solution_csv(data, &square);
});
