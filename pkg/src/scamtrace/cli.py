"""``scamtrace`` command line.

Every command reads its inputs, writes artifacts under ``--out`` and prints
a one-line JSON summary. Exit status: 0 success, 1 invalid input or
configuration, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from collections import defaultdict
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from . import analysis, chain, corpus, pipeline, synth, trace
from .clusterer import NOISE, read_assignment, write_assignment
from .config import INPUT_KEYS, RunConfig, build_run_config, read_config_file
from .errors import EmptyWindow, ScamTraceError
from .textfeat import load_stop_words

log = logging.getLogger("scamtrace")

COMMANDS = (
    "ingest",
    "cluster-types",
    "cluster-campaigns",
    "chain-cluster",
    "trace",
    "report",
    "synth",
    "eval",
    "pivot",
)

# artifacts written by earlier commands and read by later ones
TYPE_ASSIGNMENT = "type_assignment.csv"
CAMPAIGN_ASSIGNMENT = "campaign_assignment.csv"


class MissingInput(ScamTraceError, ValueError):
    pass


@dataclass
class Context:
    cfg: RunConfig

    @property
    def out(self) -> Path:
        return self.cfg.out

    def input_path(self, key: str) -> Path:
        """Configured path, or the fixture file of that name in the output
        directory (what ``synth`` writes)."""
        path = self.cfg.inputs.get(key)
        if path is None and key in _FIXTURE_KEYS:
            path = self.out / synth.FIXTURE_FILES[_FIXTURE_KEYS[key]]
        if path is None or not path.is_file():
            where = f" (looked for {path})" if path is not None else ""
            raise MissingInput(f"missing input '{key}'{where}")
        return path

    def artifact(self, name: str, produced_by: str) -> Path:
        path = self.out / name
        if not path.is_file():
            raise MissingInput(f"missing intermediate {name}; run '{produced_by}' first")
        return path

    # loaders
    def snapshots(self):
        snaps = corpus.load_snapshots(self.input_path("snapshots"))
        if not snaps:
            raise MissingInput("snapshots file is empty")
        return snaps

    def registrations(self):
        return corpus.load_registrations(self.input_path("registrations"))

    def chain_inputs(self):
        labels = chain.load_labels(self.input_path("labels"))
        txs = chain.load_transactions(self.input_path("txs"))
        prices = chain.load_prices(self.input_path("prices"))
        return txs, labels, prices

    def stop_words(self):
        path = self.cfg.inputs.get("stop_words")
        if path is not None and not path.is_file():
            raise MissingInput(f"missing input 'stop_words' (looked for {path})")
        return load_stop_words(path)

    def chain_stage(self, snapshots):
        txs, labels, prices = self.chain_inputs()
        stage = pipeline.run_chain_stage(
            txs, labels, prices, pipeline.domain_addresses(snapshots),
            self.cfg.custodial, self.cfg.change_heuristic,
        )
        return stage, txs, labels, prices


_FIXTURE_KEYS = {
    "snapshots": "snapshots",
    "registrations": "registrations",
    "txs": "txs",
    "labels": "labels",
    "prices": "prices",
    "geo": "geo",
    "truth": "truth",
}


# -- writers: stable formatting so reruns are byte-identical ------------------


def write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def load_schema(name: str) -> dict:
    """JSON schema shipped for an artifact (``summary``, ``trace``, ...)."""
    return json.loads(resources.files("scamtrace").joinpath(f"schemas/{name}.schema.json").read_text("utf-8"))


def _r(x: float, nd: int = 6) -> float:
    return round(float(x), nd)


# -- commands -----------------------------------------------------------------


def cmd_ingest(ctx: Context) -> dict:
    snaps = ctx.snapshots()
    regs = ctx.registrations()
    geo_path = ctx.cfg.inputs.get("geo")
    default_geo = ctx.out / synth.FIXTURE_FILES["geo"]
    geo = corpus.load_geo_table(ctx.input_path("geo")) if geo_path or default_geo.is_file() else {}
    located = []
    for s in snaps:
        if s.server_country is None and s.ip and geo:
            s = corpus.WebsiteSnapshot(**{**s.__dict__, "server_country": corpus.geolocate(s.ip, geo)})
        located.append(s)
    corpus.write_snapshots(ctx.out / "corpus.jsonl", located)

    chains: dict[str, int] = defaultdict(int)
    for a in {a for s in located for a in s.addresses}:
        chains[a.chain.value] += 1
    countries: dict[str, int] = defaultdict(int)
    for s in located:
        countries[s.server_country or corpus.UNKNOWN] += 1
    domains = sorted({s.domain for s in located})
    summary = {
        "snapshots": len(located),
        "domains": len(domains),
        "registrations": len(regs),
        "domains_with_registration": sum(d in regs for d in domains),
        "addresses": dict(sorted(chains.items())),
        "analytics_ids": len({g for s in located for g in s.analytics_ids}),
        "server_countries": dict(sorted(countries.items())),
    }
    write_json(ctx.out / "ingest.json", summary)
    return {"outputs": ["corpus.jsonl", "ingest.json"], "snapshots": len(located), "domains": len(domains)}


def cmd_cluster_types(ctx: Context) -> dict:
    snaps = ctx.snapshots()
    cfg = ctx.cfg
    rep = analysis.cluster_types(snaps, ctx.stop_words(), cfg.min_pts, cfg.eps_types, cfg.threads)
    domains = [s.domain for s in snaps]
    write_assignment(ctx.out / TYPE_ASSIGNMENT, domains, rep.assignment)
    write_csv(ctx.out / "type_kdist.csv", ["rank", "k_distance"], [(i, repr(d)) for i, d in enumerate(rep.k_distance_curve)])
    write_json(
        ctx.out / "type_clusters.json",
        {
            "eps": rep.eps,
            "min_pts": rep.min_pts,
            "degenerate": rep.degenerate,
            "n": len(snaps),
            "noise": rep.noise_count,
            "clusters": [
                {"cluster_id": c.cluster_id, "size": c.size, "top_terms": c.top_terms, "domains": c.domains}
                for c in rep.clusters
            ],
        },
    )
    return {
        "outputs": [TYPE_ASSIGNMENT, "type_clusters.json", "type_kdist.csv"],
        "clusters": len(rep.clusters),
        "noise": rep.noise_count,
        "eps": rep.eps,
        "degenerate": rep.degenerate,
    }


def _type_assignment(ctx: Context) -> tuple[list[str], list[int]]:
    domains, assignment = read_assignment(ctx.artifact(TYPE_ASSIGNMENT, "cluster-types"))
    return domains, list(assignment.labels)


def cmd_cluster_campaigns(ctx: Context) -> dict:
    cfg = ctx.cfg
    snaps = ctx.snapshots()
    regs = ctx.registrations()
    type_path = ctx.out / TYPE_ASSIGNMENT
    if cfg.campaign_top_types > 0 or type_path.is_file():
        t_domains, t_labels = _type_assignment(ctx)
    else:
        t_domains, t_labels = [s.domain for s in snaps], [NOISE] * len(snaps)
    domains = pipeline.campaign_domains(t_domains, t_labels, cfg.campaign_top_types)
    records = pipeline.campaign_inputs(domains, snaps, regs)
    site_types = pipeline.type_labels(t_domains, t_labels)
    rep = analysis.cluster_campaigns(records, cfg.min_pts, cfg.eps_campaigns, cfg.threads, site_types)

    write_assignment(ctx.out / CAMPAIGN_ASSIGNMENT, rep.domains, rep.assignment)
    feats = rep.features
    write_csv(
        ctx.out / "campaign_features.csv",
        ["domain"] + [f"{f}={v}" for f, v in feats.columns],
        [[d] + [int(x) for x in row] for d, row in zip(rep.domains, feats.rows)],
    )
    write_json(
        ctx.out / "campaigns.json",
        {
            "eps": rep.eps,
            "min_pts": rep.min_pts,
            "degenerate": rep.degenerate,
            "n": len(rep.domains),
            "noise": rep.assignment.noise_count,
            "multi_type_fraction": _r(rep.multi_type_fraction),
            "ga_overlap_fraction": _r(rep.ga_overlap_fraction),
            "campaigns": [c.__dict__ for c in rep.campaigns],
        },
    )
    return {
        "outputs": [CAMPAIGN_ASSIGNMENT, "campaign_features.csv", "campaigns.json"],
        "campaigns": len(rep.campaigns),
        "noise": rep.assignment.noise_count,
        "eps": rep.eps,
        "degenerate": rep.degenerate,
    }


def cmd_chain_cluster(ctx: Context) -> dict:
    snaps = ctx.snapshots()
    stage, txs, labels, prices = ctx.chain_stage(snaps)
    scam = set(stage.scam_ids)
    rows = []
    for cl in stage.clusters:
        cat = cl.entity.category.value if cl.entity else ""
        for a in sorted(cl.addresses):
            rows.append([cl.cluster_id, a.chain.value, a.canonical, int(cl.custodial), int(cl.cluster_id in scam), cat])
    write_csv(ctx.out / "clusters.csv", ["cluster_id", "chain", "address", "custodial", "scam", "category"], rows)
    p50, p75, p90 = chain.cluster_size_stats(stage.clusters)
    summary = {
        "clusters": len(stage.clusters),
        "addresses": len(stage.index),
        "custodial_removed": len(stage.custodial_ids),
        "scam_clusters": stage.scam_ids,
        "size_percentiles": {"p50": p50, "p75": p75, "p90": p90},
        "change_heuristic": ctx.cfg.change_heuristic,
    }
    write_json(ctx.out / "chain_clusters.json", summary)
    return {
        "outputs": ["clusters.csv", "chain_clusters.json"],
        "clusters": len(stage.clusters),
        "scam_clusters": len(stage.scam_ids),
    }


def cmd_trace(ctx: Context) -> dict:
    snaps = ctx.snapshots()
    stage, txs, labels, prices = ctx.chain_stage(snaps)
    params = ctx.cfg.trace
    src = trace.trace_sources(stage.scam_ids, stage.clusters, txs, labels, prices, params)
    dst = trace.trace_destinations(stage.scam_ids, stage.clusters, txs, labels, prices, params)
    trace.write_attribution_csv(ctx.out / "flows.csv", [src, dst])
    seeded = trace.detect_scam_to_scam(src)
    write_json(
        ctx.out / "trace.json",
        {
            "max_hops": params.max_hops,
            "dust_threshold_usd": params.dust_threshold_usd,
            "source": trace.attribution_summary(src),
            "destination": trace.attribution_summary(dst),
            "scam_to_scam": [{"cluster_id": c, "usd": round(u, 2)} for c, u in seeded],
        },
    )
    return {
        "outputs": ["flows.csv", "trace.json"],
        "scam_clusters": len(stage.scam_ids),
        "source_usd": round(sum(src.totals.values()), 2),
        "destination_usd": round(sum(dst.totals.values()), 2),
        "scam_to_scam": len(seeded),
    }


def cmd_report(ctx: Context) -> dict:
    t_domains, t_labels = _type_assignment(ctx)
    c_domains, c_assign = read_assignment(ctx.artifact(CAMPAIGN_ASSIGNMENT, "cluster-campaigns"))
    snaps = ctx.snapshots()
    regs = ctx.registrations()
    stage, txs, labels, prices = ctx.chain_stage(snaps)
    advertised = pipeline.domain_addresses(snaps)
    scam = set(stage.scam_ids)
    # reuse and overlap only look at scam clusters, never at custodial ones
    index = {a: c for a, c in stage.index.items() if c in scam}

    site_types = pipeline.type_labels(t_domains, t_labels)
    type_clusters, counts = analysis.type_cluster_map(site_types, advertised, index)
    reuse, shared = analysis.reuse_stats(type_clusters, counts)

    members: dict[int, list[str]] = defaultdict(list)
    for d, l in zip(c_domains, c_assign.labels):
        if l != NOISE:
            members[l].append(d)
    campaigns = [analysis.Campaign(cid, sorted(ds), [], [], False, []) for cid, ds in sorted(members.items())]
    graph = analysis.campaign_overlap_graph(campaigns, advertised, index)

    reg_dates = {d: r.registration_date for d, r in regs.items()}
    report: dict[str, Any] = {
        "reuse": {t: _r(v) for t, v in sorted(reuse.items())},
        "shared": [{"a": a, "b": b, "jaccard": _r(v)} for (a, b), v in sorted(shared.items())],
        "overlap": {
            "nodes": graph.nodes,
            "edges": [{"a": a, "b": b, "clusters": cl} for a, b, cl in graph.edges],
            "components": graph.components,
        },
    }
    outputs = ["report.json"]

    payments = analysis.domain_payments(advertised, txs, prices)
    try:
        ecdf = analysis.registration_payment_ecdf(reg_dates, payments)
    except ScamTraceError as exc:
        log.warning("no ECDF: %s", exc)
        report["ecdf"] = None
    else:
        write_csv(ctx.out / "ecdf.csv", ["lag_days", "ecdf"], [(lag, repr(v)) for lag, v in ecdf.steps()])
        outputs.append("ecdf.csv")
        report["ecdf"] = {
            "payments": len(ecdf.lags),
            "excluded": ecdf.excluded,
            "probes": {str(k): _r(v) for k, v in ecdf.probes.items()},
        }

    known = sorted(d for d in reg_dates.values() if d is not None)
    start = ctx.cfg.trend_start or (known[0] if known else None)
    end = ctx.cfg.trend_end or (known[-1] if known else None)
    try:
        if start is None or end is None:
            raise EmptyWindow("no registration dates")
        frac = analysis.keyword_trend(reg_dates, (start, end), ctx.cfg.trend_keywords)
        report["keyword_trend"] = {
            "start": start.isoformat(),
            "end": end.isoformat(),
            "keywords": list(ctx.cfg.trend_keywords),
            "fraction": _r(frac),
        }
    except ScamTraceError as exc:
        log.warning("no keyword trend: %s", exc)
        report["keyword_trend"] = None

    series = analysis.inflow_timeseries(type_clusters, stage.clusters, txs, prices)
    write_csv(
        ctx.out / "inflows.csv",
        ["type", "bucket_start", "chain", "usd", "count"],
        [
            (t, corpus.format_timestamp(b.start), b.chain, f"{b.usd:.2f}", b.count)
            for t, buckets in sorted(series.items())
            for b in buckets
        ],
    )
    outputs.append("inflows.csv")
    write_json(ctx.out / "report.json", report)
    return {
        "outputs": outputs,
        "overlap_components": len(graph.components),
        "types_with_clusters": len(type_clusters),
    }


def cmd_synth(ctx: Context) -> dict:
    eco = synth.generate_ecosystem(ctx.cfg.synth)
    paths = synth.write_ecosystem(ctx.out, eco)
    return {
        "outputs": sorted(p.name for p in paths.values()),
        "seed": ctx.cfg.synth.seed,
        "sites": len(eco.snapshots),
        "transactions": len(eco.txs),
    }


def _evaluation_json(ev: synth.Evaluation) -> dict:
    return {
        "ari": _r(ev.ari),
        "pairwise_f1": _r(ev.pairwise_f1),
        "noise_precision": _r(ev.noise_precision),
        "noise_recall": _r(ev.noise_recall),
    }


def _truth_labels(mapping: dict[str, int], domains: list[str]) -> list[int]:
    missing = [d for d in domains if d not in mapping]
    if missing:
        raise MissingInput(f"ground truth has no entry for {missing[0]}")
    return [mapping[d] for d in domains]


def cmd_eval(ctx: Context) -> dict:
    truth = synth.load_truth(ctx.input_path("truth"))
    t_domains, t_labels = _type_assignment(ctx)
    types = synth.evaluate(t_labels, _truth_labels(truth.site_type, t_domains))
    result: dict[str, Any] = {"types": _evaluation_json(types), "campaigns": None, "ownership_match": None}
    summary: dict[str, Any] = {"type_ari": _r(types.ari)}

    camp_path = ctx.out / CAMPAIGN_ASSIGNMENT
    if camp_path.is_file():
        c_domains, c_assign = read_assignment(camp_path)
        camps = synth.evaluate(c_assign, _truth_labels(truth.site_campaign, c_domains))
        result["campaigns"] = _evaluation_json(camps)
        summary["campaign_f1"] = _r(camps.pairwise_f1)
        result["ownership_match"] = _ownership_match(ctx, truth, c_domains, list(c_assign.labels))
        summary["ownership_match"] = result["ownership_match"]
    write_json(ctx.out / "eval.json", result)
    return {"outputs": ["eval.json"], **summary}


def _ownership_match(ctx: Context, truth: synth.GroundTruth, domains: list[str], labels: list[int]) -> bool | None:
    """Do overlap-graph components group exactly the planted owners' sites?"""
    needed = ("txs", "labels", "prices")
    try:
        snaps = ctx.snapshots()
        for key in needed:
            ctx.input_path(key)
    except MissingInput:
        return None
    stage, *_ = ctx.chain_stage(snaps)
    scam = set(stage.scam_ids)
    index = {a: c for a, c in stage.index.items() if c in scam}
    members: dict[int, list[str]] = defaultdict(list)
    for d, l in zip(domains, labels):
        if l != NOISE:
            members[l].append(d)
    campaigns = [analysis.Campaign(cid, sorted(ds), [], [], False, []) for cid, ds in sorted(members.items())]
    graph = analysis.campaign_overlap_graph(campaigns, pipeline.domain_addresses(snaps), index)
    predicted = {frozenset(d for cid in comp for d in members[cid]) for comp in graph.components}
    clustered = {d for ds in predicted for d in ds}
    planted: dict[str, set[str]] = defaultdict(set)
    for d, c in truth.site_campaign.items():
        if c != NOISE:
            planted[truth.campaign_owner[c]].add(d)
    expected = {frozenset(ds) for ds in planted.values()}
    return predicted == expected and clustered == {d for ds in expected for d in ds}


def cmd_pivot(ctx: Context) -> dict:
    groups = corpus.shared_resource_pivot(ctx.snapshots(), ctx.cfg.pivot_min_group)
    write_json(
        ctx.out / "pivot.json",
        {"min_group": ctx.cfg.pivot_min_group, "resources": [{"url": u, "domains": sorted(d)} for u, d in groups.items()]},
    )
    return {"outputs": ["pivot.json"], "shared_resources": len(groups)}


HANDLERS: dict[str, Callable[[Context], dict]] = {
    "ingest": cmd_ingest,
    "cluster-types": cmd_cluster_types,
    "cluster-campaigns": cmd_cluster_campaigns,
    "chain-cluster": cmd_chain_cluster,
    "trace": cmd_trace,
    "report": cmd_report,
    "synth": cmd_synth,
    "eval": cmd_eval,
    "pivot": cmd_pivot,
}


# -- argument handling --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value configuration file")
    common.add_argument("--out", help="output directory (default: scamtrace-out)")
    common.add_argument("--min-pts", dest="min_pts", help="DBSCAN MinPts (default 5)")
    common.add_argument("--eps", help="fixed DBSCAN radius for both studies")
    common.add_argument("--threads", help="worker cap; results do not depend on it")
    common.add_argument("--seed", help="seed for synthetic generation")
    common.add_argument(
        "--enable-change-heuristic", dest="change_heuristic", action="store_const", const="true",
        help="also merge one-time change outputs into the spender's cluster",
    )
    common.add_argument("--max-hops", dest="max_hops", help="trace hop cap (default 20)")
    for key in INPUT_KEYS:
        common.add_argument(f"--{key.replace('_', '-')}", dest=key, metavar="PATH", help=f"{key} input file")

    parser = argparse.ArgumentParser(
        prog="scamtrace",
        description="Cluster crypto scam websites and trace the funds they receive.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "ingest": "validate snapshots and registrations, geolocate, export corpus.jsonl",
        "cluster-types": "cluster pages into scam types (TF-IDF + DBSCAN)",
        "cluster-campaigns": "cluster sites into campaigns on registration/hosting features",
        "chain-cluster": "common-spend address clustering with custodial filtering",
        "trace": "haircut tracing of where scam funds came from and went",
        "report": "reuse, campaign overlap, ECDF, keyword trend and inflow series",
        "synth": "write a synthetic ecosystem with ground truth",
        "eval": "score cluster assignments against synthetic ground truth",
        "pivot": "group sites by shared hotlinked resources",
    }
    for name in COMMANDS:
        sub.add_parser(name, help=helps[name], parents=[common])
    return parser


def _settings(args: argparse.Namespace) -> dict[str, str]:
    values: dict[str, str] = {}
    if args.config is not None:
        values.update(read_config_file(args.config))
    flags = ["out", "min_pts", "eps", "threads", "seed", "change_heuristic", "max_hops", *INPUT_KEYS]
    for key in flags:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


def run(argv: list[str] | None = None) -> int:
    level = os.environ.get("SCAMTRACE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = build_run_config(_settings(args))
        cfg.out.mkdir(parents=True, exist_ok=True)
        summary = HANDLERS[args.command](Context(cfg))
    except (ScamTraceError, ValueError, KeyError) as exc:
        print(f"scamtrace {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"scamtrace {args.command}: I/O error: {exc}", file=sys.stderr)
        return 2
    line = {"command": args.command, "status": "ok", **summary}
    print(json.dumps(line, sort_keys=True))
    return 0


def main(argv: list[str] | None = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
