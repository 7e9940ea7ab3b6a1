#![no_main]
use libfuzzer_sys::fuzz_target;
use semirobin::mesh::Mesh;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(mesh) = Mesh::from_json(s) {
            let _ = mesh.volume_quadrature();
            let _ = mesh.boundary_quadrature();
            let _ = mesh.to_json();
        }
    }
});
