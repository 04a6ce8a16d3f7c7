#!/usr/bin/env python3
"""A tour of the tensor library: build a graph, backprop, sanity-check it.

The whole engine runs on this ~600-line reverse-mode autodiff core, so this
demo walks the pieces you will meet everywhere else: parameters, ops, the
backward pass, gradient checking, and the segment ops used for ragged
candidate batches.
"""

import numpy as np

import codecomplete.tensor as T


def main():
    rng = np.random.default_rng(0)

    print("== a tiny regression, by hand ==")
    x = T.constant(rng.normal(size=(8, 3)).astype(np.float32))
    y = T.constant(rng.normal(size=(8, 1)).astype(np.float32))
    w = T.parameter(rng.normal(size=(3, 1)).astype(np.float32) * 0.1)
    b = T.parameter(np.zeros((1,), dtype=np.float32))

    for step in range(30):
        err = T.sub(T.add(T.matmul(x, w), b), y)
        loss = T.reduce_mean(T.mul(err, err))
        T.backward(loss)
        for p in (w, b):
            p.data -= 0.1 * p.grad
            p.grad = None
        if step % 10 == 0:
            print(f"  step {step:2d}  loss {loss.item():.4f}")

    print("\n== gradient checking ==")
    params = [T.parameter(rng.uniform(0.5, 1.5, (4, 3)).astype(np.float32))]
    report = T.grad_check(
        lambda p: T.reduce_sum(T.log(p[0])), params)
    print(f"  d/dx sum(log x): max rel err {report.max_rel_err:.2e} "
          f"(passed={report.passed})")

    print("\n== segment softmax over a ragged batch ==")
    # three candidate lists of sizes 2, 3 and 1, flattened
    scores = T.parameter(np.array([1.0, 2.0, 0.5, 0.5, 0.5, 9.0],
                                  dtype=np.float32))
    seg = T.SegmentIndex([0, 0, 1, 1, 1, 2], 3)
    probs = T.segment_softmax(scores, seg)
    print("  flat scores :", scores.data.round(2).tolist())
    print("  segment ids :", seg.ids.tolist())
    print("  probs       :", probs.data.round(4).tolist())
    print("  (each segment sums to 1 on its own)")

    print("\n== no_grad mode ==")
    with T.no_grad():
        silent = T.matmul(x, w)
    print(f"  graph recorded inside no_grad: {silent.op!r} has "
          f"requires_grad={silent.requires_grad}")


if __name__ == "__main__":
    main()
