#![no_main]
use libfuzzer_sys::fuzz_target;
use semirobin::form::SymmetricForm;

fuzz_target!(|data: &[u8]| {
    if let Ok(f) = SymmetricForm::read_csv(data, None) {
        let x = vec![1.0; f.order()];
        let _ = f.apply(&x);
    }
    let _ = SymmetricForm::read_csv(data, Some(8));
});
