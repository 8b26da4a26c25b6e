"""llexport command line.

  llexport run --kind vae --checkpoint m.pt --data DATASET --family stir \
      --golden golden/transform_vectors.ndjson --out cache.ndjson

  llexport demo-checkpoint --shape 32x32x1 --seed 0 --out vae.pt
      (writes an untrained seeded VAE checkpoint, useful for smoke tests)
"""

from __future__ import annotations

import argparse
import sys

from .export import ExportJob, export
from .golden import GoldenMismatch
from .models import MODEL_KINDS
from .transforms import FAMILIES


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="llexport")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="export a likelihood cache")
    p.add_argument("--kind", required=True, choices=MODEL_KINDS)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--golden", required=True)
    p.add_argument("--family", default="stir", choices=("identity",) + FAMILIES)
    p.add_argument("--family-seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--model-id", default=None)
    p.add_argument("--dataset-id", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("demo-checkpoint", help="write a seeded demo VAE checkpoint")
    p.add_argument("--shape", default="32x32x1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--latent", type=int, default=16)
    p.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    if args.cmd == "run":
        job = ExportJob(
            model_kind=args.kind, checkpoint=args.checkpoint, dataset=args.data,
            golden=args.golden, output=args.out,
            family=None if args.family == "identity" else args.family,
            family_seed=args.family_seed, batch_size=args.batch_size,
            model_id=args.model_id, dataset_id=args.dataset_id)
        try:
            out = export(job)
        except GoldenMismatch as exc:
            print(f"llexport: refusing to export: {exc}", file=sys.stderr)
            return 1
        except (ValueError, OSError, KeyError) as exc:
            print(f"llexport: {exc}", file=sys.stderr)
            return 1
        print(f"wrote {out}")
        return 0

    import torch

    from .models import ConvVae, save_vae_checkpoint

    h, w, c = (int(v) for v in args.shape.lower().split("x"))
    if h != w:
        print("llexport: demo VAE expects square images", file=sys.stderr)
        return 1
    torch.manual_seed(args.seed)
    model = ConvVae(in_channels=c, image_size=h, latent_dim=args.latent)
    save_vae_checkpoint(model, args.out)
    print(f"wrote demo checkpoint {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
