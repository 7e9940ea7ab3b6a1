use proptest::prelude::*;

use semirobin::config::parse_config;
use semirobin::form::SymmetricForm;
use semirobin::io::fmt_f64;

proptest! {
    #[test]
    fn float_text_roundtrips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn resolved_config_roundtrips(
        b in 0.1f64..100.0,
        n in 3usize..500,
        xi in -10.0f64..10.0,
        beta in 0.0f64..5.0,
        frac in 0.01f64..0.99,
        delta in 1e-3f64..1.0,
        seed in any::<u64>(),
        m in 1usize..4,
        gap in 2usize..4,
    ) {
        let text = format!(
            "[domain]\nkind = interval\nb = {b}\nn = {n}\n[potential]\nvalue = {xi}\n[boundary]\nvalue = {beta}\n\
             [reaction]\nm = {m}\nl = {}\nsoftening_fraction = {frac}\ndelta = {delta}\n[solver]\nseed = {seed}\n",
            m + gap
        );
        let c = parse_config(&text).unwrap();
        let again = parse_config(&c.to_ini()).unwrap();
        prop_assert_eq!(&c, &again);
        prop_assert_eq!(c.to_ini(), again.to_ini());
    }

    #[test]
    fn triplet_csv_roundtrips(entries in proptest::collection::vec((0usize..12, 0usize..12, -1e3f64..1e3), 0..40)) {
        let f = SymmetricForm::from_triplets(12, entries).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let g = SymmetricForm::read_csv(&buf[..], Some(12)).unwrap();
        prop_assert_eq!(f.to_dense(), g.to_dense());
    }

    #[test]
    fn config_parser_never_panics(s in "\\PC{0,200}") {
        let _ = parse_config(&s);
    }
}
