use proptest::prelude::*;
use smokeflow::config::{ConfigLayer, PipelineConfig};
use smokeflow::flo;
use smokeflow_core::{FlowField, Vec2};

fn field() -> impl Strategy<Value = FlowField> {
    (1usize..24, 1usize..24).prop_flat_map(|(w, h)| {
        prop::collection::vec((any::<f32>(), any::<f32>()), w * h).prop_map(move |d| {
            let mut it = d.into_iter();
            FlowField::from_fn(w, h, |_, _| {
                let (a, b) = it.next().unwrap();
                let fix = |v: f32| if v.is_finite() { v as f64 } else { 0.0 };
                Vec2::new(fix(a), fix(b))
            })
        })
    })
}

proptest! {
    #[test]
    fn flo_round_trip_is_bit_exact(v in field()) {
        let bytes = flo::encode(&v).unwrap();
        prop_assert_eq!(bytes.len(), 12 + 8 * v.width() * v.height());
        let back = flo::decode(&bytes).unwrap();
        prop_assert_eq!(back.dims(), v.dims());
        for (a, b) in back.iter().zip(v.iter()) {
            prop_assert_eq!(a.x.to_bits(), b.x.to_bits());
            prop_assert_eq!(a.y.to_bits(), b.y.to_bits());
        }
    }

    #[test]
    fn truncated_flo_is_rejected(v in field(), cut in 1usize..16) {
        let bytes = flo::encode(&v).unwrap();
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(flo::decode(&bytes[..keep]).is_err());
    }

    #[test]
    fn config_survives_toml(sigma in 0.5f64..30.0, eta in 0.01f64..1.0, lambda in 0.0f64..50.0, outer in 1usize..50) {
        let text = format!("[attraction]\nsigma_spatial = {sigma}\neta = {eta}\n[interp]\nlambda = {lambda}\n[refine]\nouter_iters = {outer}\n");
        let resolved = ConfigLayer::parse(&text, "prop").unwrap().resolve().unwrap();
        let again: PipelineConfig = toml::from_str(&toml::to_string(&resolved).unwrap()).unwrap();
        prop_assert_eq!(again.hash(), resolved.hash());
        prop_assert_eq!(again, resolved);
    }
}
