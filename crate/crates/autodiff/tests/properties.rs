use proptest::prelude::*;
use weavematch_autodiff::{Checkpoint, ParamStore, Tape, Tensor};

fn pipeline(t: &mut Tape<f32>, store: &ParamStore<f32>, x: &Tensor<f32>) -> (f32, bool) {
    let w = t.param(store, store.id("w").unwrap());
    let g = t.param(store, store.id("gamma").unwrap());
    let b = t.param(store, store.id("beta").unwrap());
    let a = t.param(store, store.id("alpha").unwrap());
    let x = t.variable(x.clone());
    let h = t.linear(x, w, None).unwrap();
    let (h, _) = t.batch_norm_train(h, g, b, 1e-5).unwrap();
    let h = t.prelu(h, a).unwrap();
    let pooled = t.max_over_set(h).unwrap();
    let rep = t.repeat_over_set(pooled, 4).unwrap();
    let cat = t.concat_last(&[h, rep]).unwrap();
    let s = t.sum_last(cat).unwrap();
    let p = t.softmax_last(s).unwrap();
    let n = t.l2norm_last(p).unwrap();
    let loss = t.mean(n);
    let grads = t.backward(loss).unwrap();
    (t.value(loss).item(), grads.all_finite())
}

fn store() -> ParamStore<f32> {
    let mut s = ParamStore::new();
    s.add("w", Tensor::from_fn(vec![3, 5], |k| (k as f32 * 0.37).sin()), true).unwrap();
    s.add("gamma", Tensor::full(vec![5], 1.0), true).unwrap();
    s.add("beta", Tensor::zeros(vec![5]), true).unwrap();
    s.add("alpha", Tensor::full(vec![1], 0.25), true).unwrap();
    s
}

proptest! {
    #[test]
    fn forward_and_backward_stay_finite(data in prop::collection::vec(-1e3f32..1e3, 2 * 4 * 3)) {
        let x = Tensor::new(vec![2, 4, 3], data).unwrap();
        let (loss, finite) = pipeline(&mut Tape::new(), &store(), &x);
        prop_assert!(loss.is_finite());
        prop_assert!(finite);
    }

    #[test]
    fn checkpoint_round_trips(data in prop::collection::vec(-1e6f32..1e6, 0..40), meta in ".{0,20}") {
        let mut s = ParamStore::new();
        s.add("a", Tensor::new(vec![data.len()], data).unwrap(), true).unwrap();
        s.add("b", Tensor::full(vec![2, 2], -0.5f32), false).unwrap();
        let c = Checkpoint::from_store(&s, meta);
        prop_assert_eq!(Checkpoint::decode(&c.encode()).unwrap(), c);
    }

    #[test]
    fn decoder_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = Checkpoint::<f32>::decode(&bytes);
        let mut prefixed = b"WVCK\x01\0\0\0".to_vec();
        prefixed.extend(bytes);
        let _ = Checkpoint::<f32>::decode(&prefixed);
    }
}

#[test]
fn repeated_forward_is_bit_identical() {
    let x = Tensor::from_fn(vec![2, 4, 3], |k| (k as f32 * 0.91).cos() * 4.0);
    let s = store();
    let (a, _) = pipeline(&mut Tape::new(), &s, &x);
    let (b, _) = pipeline(&mut Tape::new(), &s, &x);
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn restore_rejects_mismatched_shapes() {
    let s = store();
    let c = Checkpoint::from_store(&s, "");
    let mut other = ParamStore::new();
    other.add("w", Tensor::<f32>::zeros(vec![5, 3]), true).unwrap();
    other.add("gamma", Tensor::zeros(vec![5]), true).unwrap();
    other.add("beta", Tensor::zeros(vec![5]), true).unwrap();
    other.add("alpha", Tensor::zeros(vec![1]), true).unwrap();
    assert!(c.restore_into(&mut other).is_err());
    let mut same = store();
    same.get_mut(same.id("w").unwrap()).value.data_mut()[0] = 99.0;
    c.restore_into(&mut same).unwrap();
    assert_eq!(same.get(same.id("w").unwrap()).value, s.get(s.id("w").unwrap()).value);
}
