'''
Human-readable summaries and plain data files from an evaluation report.
'''

import logging
import sys
from pathlib import Path

from webdvfs.device import Metric, CostModelParams, config_transfer
from webdvfs.evaluate import load_report, improvement
from webdvfs.corpus import diversity_summary
from webdvfs.features import DOM_NODES
from webdvfs.utils import WebdvfsException, read_json

logger = logging.getLogger('webdvfs')

IMPROVEMENT_NAMES = {Metric.LOAD_TIME: 'speedup', Metric.ENERGY: 'energy reduction', Metric.EDP: 'EDP reduction'}


def _fmt_improvement(value, metric):
    if metric is Metric.LOAD_TIME:
        return f"{value:.2f}x"
    return f"{value:.1%}"


def improvement_data(report):
    # Per-page ratio to HMP and improvement, sorted by improvement
    metric = report.metric
    data = sorted(((r.page_id, r.ratio(metric), improvement(r.ratio(metric), metric)) for r in report.rows),
                  key=lambda item: item[2])
    return data


def write_dat(path, header, rows):
    # gnuplot-style whitespace separated columns with a commented header
    with open(path, 'w') as fid:
        fid.write('# ' + ' '.join(header) + '\n')
        for row in rows:
            fid.write(' '.join(str(x) if isinstance(x, str) else repr(float(x)) for x in row) + '\n')
    return path


def summary_lines(report, overheads=None, diversity=None, transfer=None):
    '''
    Text summary of one metric's evaluation.
    '''
    metric = report.metric
    agg = report.aggregates
    name = IMPROVEMENT_NAMES[metric]
    lines = [f"== {metric.value} ({report.mode}, {agg['pages']} pages, C={report.C:g}, gamma={report.gamma:.4g}) ==",
             f"{name} vs HMP: {_fmt_improvement(agg['improvement'], metric)} "
             f"(range {_fmt_improvement(agg['worst_improvement'], metric)} to "
             f"{_fmt_improvement(agg['best_improvement'], metric)})",
             f"oracle {name} vs HMP: {_fmt_improvement(improvement(agg['oracle_ratio_vs_hmp'], metric), metric)}",
             f"share of oracle performance: {agg['oracle_fraction']:.1%}",
             f"exact-label accuracy: {agg['accuracy']:.1%}"]
    if report.params.noise_sigma > 0:
        lines.append(f"measurement repetitions: up to {agg['max_repetitions']}, "
                     f"{agg['ci_converged']:.1%} within the confidence target")
    missed = agg['mispredicted']
    if missed:
        lines.append(f"mispredicted pages: {missed['pages']}, {name} "
                     f"{_fmt_improvement(improvement(missed['ratio_vs_hmp'], metric), metric)}, "
                     f"mean {missed['mean_oracle_fraction']:.1%} of oracle")

    if report.label_set:
        lines.append(f"configurations used by the oracle: {len(report.label_set)}")
        for key, count in sorted(report.label_histogram.items(), key=lambda kv: (-kv[1], kv[0])):
            lines.append(f"  {key:<18} {count}")
    if report.fixed_configs:
        lines.append("fixed configuration (geometric mean vs HMP):")
        for entry in report.fixed_configs:
            lines.append(f"  {entry['config']:<18} {entry['ratio_vs_hmp']:.4f}")
        lines.append(f"  {'predicted':<18} {agg['ratio_vs_hmp']:.4f}")
    if report.importance:
        ranked = sorted(report.importance, key=lambda item: -item[1])
        lines.append("most informative features: " + ', '.join(f"{n} ({s:.3f})" for n, s in ranked[:5]))
    if overheads:
        lines.append(f"runtime overhead per page ({overheads['pages']} pages): "
                     f"{overheads['mean_total_ms']:.2f} ms, {overheads['share_of_load_time']:.2%} of load time")
        for phase, ms in overheads['mean_ms'].items():
            lines.append(f"  {phase:<20} {ms:.3f} ms")
    if diversity:
        for feature, stats in diversity.items():
            lines.append(f"{feature}: min {stats['min']:g}, median {stats['median']:g}, max {stats['max']:g}")
    if transfer:
        (small, large), losses = transfer
        lines.append(f"running {large} under the best configuration of {small} loses: "
                     + ', '.join(f"{m.value} {loss:.1%}" for m, loss in losses.items()))
    return lines


def corpus_transfer(corpus, params=CostModelParams()):
    # The smallest and the largest page by DOM node count
    corpus = sorted(corpus, key=lambda item: (item[1].value(DOM_NODES), item[0]))
    (small_id, small), (large_id, large) = corpus[0], corpus[-1]
    return (small_id, large_id), config_transfer(small, large, params)


def cmd_report(report_path, paths, corpus=None, overheads_path=None):
    '''
    Write the summary and plot data of an evaluation report.

    Parameters
    ----------
    report_path : Path
        report_<metric>.json written by the evaluate command
    paths : dict
        Output folders from folder_setup
    corpus : list of (page_id, FeatureVector), optional
        Adds the corpus diversity summary and a configuration transfer example
    overheads_path : Path, optional
        Overhead profile JSON; defaults to overheads_<metric>.json beside the report

    Returns
    -------
    list of str
        The summary lines
    '''
    report_path = Path(report_path)
    report = load_report(report_path)
    metric = report.metric
    name = metric.short
    if not report.rows:
        raise WebdvfsException(f"{report_path} holds no evaluation rows")

    if overheads_path is None:
        overheads_path = report_path.parent / f"overheads_{name}.json"
    overheads = read_json(overheads_path) if Path(overheads_path).exists() else None

    diversity = transfer = None
    if corpus:
        diversity = diversity_summary(corpus)
        if len(corpus) > 1:
            transfer = corpus_transfer(corpus, report.params)

    plotdata = paths['plotdata']
    write_dat(plotdata / f"improvement_{name}.dat", ['page_id', 'ratio_vs_hmp', 'improvement'],
              improvement_data(report))
    write_dat(plotdata / f"labels_{name}.dat", ['config', 'pages'], sorted(report.label_histogram.items()))
    write_dat(plotdata / f"fixed_{name}.dat", ['config', 'ratio_vs_hmp'],
              [(e['config'], e['ratio_vs_hmp']) for e in report.fixed_configs])
    write_dat(plotdata / f"importance_{name}.dat", ['feature', 'gain_ratio'], report.importance)
    if overheads:
        write_dat(plotdata / f"overheads_{name}.dat", ['phase', 'mean_ms'], list(overheads['mean_ms'].items()))
    if diversity:
        for feature, stats in diversity.items():
            edges = stats['bin_edges']
            write_dat(plotdata / f"diversity_{feature.replace('.', '_')}.dat", ['bin_low', 'bin_high', 'pages'],
                      [(edges[k], edges[k + 1], c) for k, c in enumerate(stats['counts'])])

    lines = summary_lines(report, overheads, diversity, transfer)
    (paths['reports'] / f"summary_{name}.txt").write_text('\n'.join(lines) + '\n')
    sys.stdout.write('\n'.join(lines) + '\n')
    return lines
