"""Regenerate the bundled 50-comment fixture under src/gasspam/data/tiny.

Layout (fixed by hand, no randomness in the records):
  * 10 users u01..u10, 12 items i01..i12, 50 comments, timestamps 1000..1049
  * 10 spam: u01 posts 5 contact-token ads on i01..i05; u06..u10 each post one
    coupon message on i06..i10
  * 40 normal comments cycling over users u02..u10 and items i01..i12
Word vectors are 8-dimensional; the contact token and its look-alikes sit
close together, as do the coupon words.
"""

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "gasspam" / "data" / "tiny"

NORMAL = [
    "good quality fast shipping",
    "nice item thanks seller",
    "price is fair and item works",
    "arrived fast great condition",
    "works as described thanks",
    "size fits well good fabric",
    "color a bit different but nice",
    "seller answered quickly thanks",
]
ADS = ["add vx123 cheap deal", "cheap deal add v-x123", "add wx123 for cheap deal", "deal cheap vx123 add now", "add vx-123 cheap"]
COUPONS = ["coupon code discount here", "discount coupon code today", "get coupon discount code", "coupon discount code free", "code coupon discount now"]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rows = []
    t = 1000
    for k, text in enumerate(ADS):
        rows.append(("u01", f"i{k + 1:02d}", text, 1))
    for k, text in enumerate(COUPONS):
        rows.append((f"u{k + 6:02d}", f"i{k + 6:02d}", text, 1))
    for k in range(40):
        rows.append((f"u{2 + k % 9:02d}", f"i{1 + (k * 5) % 12:02d}", NORMAL[k % len(NORMAL)], 0))
    # interleave spam and normal comments in time
    order = sorted(range(len(rows)), key=lambda r: (r * 7) % len(rows))
    with open(OUT / "records.jsonl", "w", encoding="utf-8") as fh:
        for n, r in enumerate(order):
            u, i, text, y = rows[r]
            rec = {"comment_id": f"c{n:02d}", "user_id": u, "item_id": i, "text": text, "timestamp": t + n, "label": y}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    vocab = sorted({w for _, _, text, _ in rows for w in text.split()})
    rng = np.random.default_rng(7)
    base = {w: rng.normal(size=8) for w in vocab}
    contact = rng.normal(size=8)
    coupon = rng.normal(size=8)
    for w in vocab:
        if "x123" in w or "x-123" in w:
            base[w] = contact + 0.1 * rng.normal(size=8)
        elif w in ("coupon", "code", "discount"):
            base[w] = coupon + 0.2 * rng.normal(size=8)
    with open(OUT / "embeddings.txt", "w", encoding="utf-8") as fh:
        for w in vocab:
            v = base[w] / np.linalg.norm(base[w])
            fh.write(w + " " + " ".join(f"{x:.6f}" for x in v) + "\n")


if __name__ == "__main__":
    main()
