"""Command-line surface: register, generate, contend, and the lab studies.

Exit codes: 0 accept / report produced, 1 claim rejected, 2 backend
failure, 3 fit failure, 4 usage or input error.
"""

import argparse
import json
import os
import sys

import numpy as np

from poa.adjudicator import ClaimRequest, adjudicate, judge
from poa.errors import BackendError, DuplicateIdentity, FitError, PoaError
from poa.generator import embedding_bytes_from_prompt, embedding_from_bytes, toy_decode
from poa.latent import Image, latent_digest, read_poal, write_poal
from poa.registry import KappaArchive
from poa.seeding import Kappa, MetaParams, derive_seed, expand_block, fresh_entropy
from poa.transforms import AffineParams
from poa.workspace import load_workspace

EXIT_ACCEPT = 0
EXIT_REJECT = 1
EXIT_BACKEND = 2
EXIT_FIT = 3
EXIT_USAGE = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit2(f"error: {message}")


class SystemExit2(Exception):
    """Usage failure carrying the message (mapped to exit code 4)."""


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def build_parser() -> _Parser:
    parser = _Parser(prog="poa", description="proof-of-authorship toolkit")
    parser.add_argument("--workspace", help="workspace directory (default: $POA_WORKSPACE)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_reg = sub.add_parser("register", help="register an author identity")
    p_reg.add_argument("--label", required=True)
    p_reg.add_argument("--entropy-hex", help="32 bytes of entropy (testing); default OS randomness")

    p_gen = sub.add_parser("generate", help="generate a latent bound to an identity")
    p_gen.add_argument("--identity", required=True, help="registered identity id (hex)")
    p_gen.add_argument("--m-file", help="meta-parameter JSON file (default workspace meta)")
    src = p_gen.add_mutually_exclusive_group(required=True)
    src.add_argument("--prompt", help="prompt text (toy embedding)")
    src.add_argument("--embedding-file", help="raw embedding bytes")
    p_gen.add_argument("--r-hex", help="16 free-bit bytes (hex); default fresh randomness")
    p_gen.add_argument("--out", required=True, help="output POAL path")
    p_gen.add_argument("--image-out", help="optional decoded image (.npy)")

    p_con = sub.add_parser("contend", help="adjudicate a contested object")
    p_con.add_argument("--contested", required=True, help=".poal latent or .npy image")
    p_con.add_argument("--identity", required=True)
    kap = p_con.add_mutually_exclusive_group(required=True)
    kap.add_argument("--kappa-r", help="lookup archived parameters by free bits (hex)")
    kap.add_argument("--kappa-file", help="inline parameters JSON")
    p_con.add_argument("--p-r-log2", type=float, default=None, help="forger budget, log2")
    p_con.add_argument("--alpha", type=float, default=None, help="override alpha (default p_r/2)")
    p_con.add_argument("--delta", type=float, default=None)
    p_con.add_argument("--transform", help="alignment AffineParams: inline JSON or file path")
    p_con.add_argument("--out", help="report path (default stdout only)")

    p_lab = sub.add_parser("lab", help="evaluation and security studies")
    lab_sub = p_lab.add_subparsers(dest="study", required=True)
    lab_sub.add_parser("table1")
    s = lab_sub.add_parser("ks-study")
    s.add_argument("--embeddings", type=int, default=20)
    s.add_argument("--samples", type=int, default=None)
    s = lab_sub.add_parser("distance-study")
    s.add_argument("--embeddings", type=int, default=30)
    s.add_argument("--points", type=int, default=30)
    s = lab_sub.add_parser("table2")
    s.add_argument("--embeddings", type=int, default=100)
    s.add_argument("--progress", action="store_true")
    s = lab_sub.add_parser("random-forger")
    s.add_argument("--trials", type=int, default=8192)
    s = lab_sub.add_parser("advantage")
    s.add_argument("--strategy", choices=["replay", "random-guess"], default="replay")
    s.add_argument("--insecure-prf", action="store_true")
    s.add_argument("--instances", type=int, default=32)
    s.add_argument("--trials", type=int, default=256)
    s = lab_sub.add_parser("prf-game")
    s.add_argument("--insecure-prf", action="store_true")
    s.add_argument("--rounds", type=int, default=10000)
    s = lab_sub.add_parser("a2-detect")
    s.add_argument("--runs", type=int, default=100)
    s.add_argument("--scores", type=int, default=8192)
    s.add_argument("--rho", type=float, default=0.05)
    return parser


def _load_meta(args, ws) -> MetaParams:
    if getattr(args, "m_file", None):
        if not os.path.exists(args.m_file):
            raise SystemExit2(f"meta-parameter file not found: {args.m_file}")
        with open(args.m_file, encoding="utf-8") as fh:
            return MetaParams.from_dict(json.load(fh))
    return ws.meta


def _load_transform(spec: str) -> AffineParams:
    text = spec
    if os.path.exists(spec):
        with open(spec, encoding="utf-8") as fh:
            text = fh.read()
    try:
        return AffineParams.from_dict(json.loads(text))
    except (json.JSONDecodeError, TypeError, KeyError, ValueError) as exc:
        raise SystemExit2(f"bad transform JSON: {exc}") from exc


def _load_contested(path: str):
    if not os.path.exists(path):
        raise SystemExit2(f"contested file not found: {path}")
    if path.endswith(".npy"):
        return Image.from_grid(np.load(path))
    return read_poal(path)


def cmd_register(args, ws) -> int:
    entropy = bytes.fromhex(args.entropy_hex) if args.entropy_hex else fresh_entropy()
    ident = ws.registry().register(args.label, entropy)
    _emit({"id_hex": ident.id_hex, "label": ident.label, "registered_at": ident.registered_at})
    return EXIT_ACCEPT


def cmd_generate(args, ws) -> int:
    registry = ws.registry()
    ident = registry.get(args.identity)
    m = _load_meta(args, ws)
    if args.prompt is not None:
        raw = embedding_bytes_from_prompt(args.prompt)
        e_ref = None
    else:
        if not os.path.exists(args.embedding_file):
            raise SystemExit2(f"embedding file not found: {args.embedding_file}")
        with open(args.embedding_file, "rb") as fh:
            raw = fh.read()
        e_ref = args.embedding_file
    emb = embedding_from_bytes(raw)
    r = bytes.fromhex(args.r_hex) if args.r_hex else fresh_entropy()[:16]
    kappa = Kappa(m=m, e_digest=emb.digest, r=r, e_ref=e_ref)
    seed = derive_seed(ident, kappa)
    backend = ws.backend()
    latent = backend.generate(m, emb.digest, seed)
    write_poal(args.out, latent)
    KappaArchive(ws.archive_path).append(ident, kappa)
    out = {
        "seed_digest_hex": expand_block(seed, 0).hex(),
        "latent_digest_hex": latent_digest(latent).hex(),
        "poal_path": args.out,
        "r_hex": r.hex(),
        "e_digest_hex": emb.digest.hex(),
    }
    if args.image_out:
        image = toy_decode(latent, ws.upscale)
        np.save(args.image_out, image.grid())
        out["image_path"] = args.image_out
    _emit(out)
    return EXIT_ACCEPT


def cmd_contend(args, ws) -> int:
    registry = ws.registry()
    ident = registry.get(args.identity)
    if args.kappa_file:
        if not os.path.exists(args.kappa_file):
            raise SystemExit2(f"kappa file not found: {args.kappa_file}")
        with open(args.kappa_file, encoding="utf-8") as fh:
            kappa = Kappa.from_dict(json.load(fh))
    else:
        try:
            kappa = ws.archive().find(ident.id_hex, args.kappa_r.lower())
        except KeyError as exc:
            raise SystemExit2(str(exc)) from exc
    p_r_log2 = args.p_r_log2 if args.p_r_log2 is not None else ws.p_r_log2
    p_r = 2.0 ** p_r_log2
    alpha = args.alpha if args.alpha is not None else p_r / 2.0
    delta = args.delta if args.delta is not None else ws.delta
    transform = _load_transform(args.transform) if args.transform else None
    contested = _load_contested(args.contested)
    request = ClaimRequest(
        contested=contested, identity=ident, kappa=kappa,
        alpha=alpha, delta=delta, transform=transform, backend=ws.backend(),
    )
    report = adjudicate(request)
    verdict = judge(report, p_r)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(report.to_canonical_json())
    _emit(
        {
            "accept": verdict.accept,
            "p_r_log2": p_r_log2,
            "q_hat_log2": report.q_hat_log2,
            "q_upper_log2": report.q_upper_log2,
            "T": report.T,
            "n": report.n,
            "ks": report.ks,
            "rationale": verdict.rationale,
            "report_path": args.out,
        }
    )
    return EXIT_ACCEPT if verdict.accept else EXIT_REJECT


def cmd_lab(args, ws) -> int:
    from poa import lab

    if args.study == "table1":
        _emit(lab.study_table1())
    elif args.study == "ks-study":
        _emit(lab.study_ks(embeddings=args.embeddings, n_samples=args.samples, m=ws.meta))
    elif args.study == "distance-study":
        _emit(lab.study_distance(embeddings=args.embeddings, points=args.points, m=ws.meta))
    elif args.study == "table2":
        _emit(lab.study_table2(embeddings=args.embeddings, m=ws.meta, progress=args.progress))
    elif args.study == "random-forger":
        _emit(lab.study_random_forger(trials=args.trials, m=ws.meta))
    elif args.study == "advantage":
        _emit(
            lab.study_advantage(
                strategy=args.strategy, insecure=args.insecure_prf,
                instances=args.instances, trials=args.trials, m=ws.meta,
            )
        )
    elif args.study == "prf-game":
        _emit(lab.study_prf_game(insecure=args.insecure_prf, rounds=args.rounds))
    elif args.study == "a2-detect":
        _emit(lab.study_a2(runs=args.runs, n_scores=args.scores, rho=args.rho))
    return EXIT_ACCEPT


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        ws = load_workspace(args.workspace)
        if args.command == "register":
            return cmd_register(args, ws)
        if args.command == "generate":
            return cmd_generate(args, ws)
        if args.command == "contend":
            return cmd_contend(args, ws)
        if args.command == "lab":
            return cmd_lab(args, ws)
        raise SystemExit2(f"unknown command {args.command!r}")
    except SystemExit2 as exc:
        print(f"poa: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DuplicateIdentity, KeyError, ValueError) as exc:
        print(f"poa: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FitError as exc:
        print(f"poa: fit failure: {exc}", file=sys.stderr)
        return EXIT_FIT
    except BackendError as exc:
        print(f"poa: backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except PoaError as exc:
        print(f"poa: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
