from dataclasses import replace
from pathlib import Path
import click
import logging
import sys

from webdvfs.device import Metric, METRICS, load_params
from webdvfs.pipeline import Browser
from webdvfs.utils import WebdvfsException, cleanup

logger = logging.getLogger('webdvfs')

EXIT_VALIDATION = 2
EXIT_INTERNAL = 1


class WebdvfsGroup(click.Group):
    # Validation errors exit with 2, anything unexpected with 1
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (click.exceptions.Exit, click.ClickException, click.Abort):
            raise
        except WebdvfsException as e:
            logger.critical(e)
            ctx.exit(EXIT_VALIDATION)
        except Exception as e:
            logger.critical(f"Internal error: {e!r}")
            logger.debug("Traceback", exc_info=True)
            ctx.exit(EXIT_INTERNAL)


def _metrics(name):
    if name == 'all':
        return list(METRICS)
    return [Metric.parse(name)]


@click.group(cls=WebdvfsGroup)
@click.option('--seed', type=int, default=7, help='Seed of the corpus generator, holdout split and measurement noise')
@click.option('--params', 'params_file', type=click.Path(exists=True, dir_okay=False), default=None,
              help='JSON file of cost model parameter overrides')
@click.option('--metric', type=click.Choice(['time', 'energy', 'edp', 'all']), default='all',
              help='Optimisation metric(s) to work on')
@click.option('--out', type=click.Path(file_okay=False), default='.', help='Directory for models, reports and traces')
@click.option('--verbose', '-v', is_flag=True, help='Show debug messages')
@click.pass_context
def cli(ctx, seed, params_file, metric, out, verbose):
    '''Predict web page processor configurations on a simulated big.LITTLE device.'''
    ctx.ensure_object(dict)
    ctx.obj['options'] = dict(seed=seed, params_file=params_file, metric=metric, out=Path(out), verbose=verbose)


def _browser(ctx, noise=None):
    options = ctx.obj['options']
    params = load_params(options['params_file'])
    if noise is not None:
        params = replace(params, noise_sigma=noise)
    return Browser(options['out'], params=params, seed=options['seed'], verbose=options['verbose'])


@cli.command('gen-corpus')
@click.argument('dest', type=click.Path(file_okay=False))
@click.option('--n', 'n', type=click.IntRange(min=1), default=400, help='Number of pages')
@click.option('--profile', type=click.Choice(['desktop', 'small']), default='desktop', help='Page size range')
@click.pass_context
def gen_corpus_cmd(ctx, dest, n, profile):
    '''Write a synthetic corpus of DEST/<page>/index.html pages.'''
    _browser(ctx).gen_corpus(Path(dest), n, profile)


@cli.command()
@click.argument('corpus', type=click.Path(exists=True, file_okay=False))
@click.option('--raw', is_flag=True, help='Also dump every candidate feature as JSON lines')
@click.pass_context
def extract(ctx, corpus, raw):
    '''Extract the feature vectors of every page in CORPUS.'''
    _browser(ctx).extract(Path(corpus), raw)


@cli.command()
@click.argument('corpus', type=click.Path(exists=True, file_okay=False))
@click.pass_context
def train(ctx, corpus):
    '''Train one model per metric on CORPUS.'''
    _browser(ctx).train(Path(corpus), _metrics(ctx.obj['options']['metric']))
    sys.stdout.write("✅ Training complete\n")


@cli.command()
@click.argument('corpus', type=click.Path(exists=True, file_okay=False))
@click.option('--mode', type=click.Choice(['loocv', 'holdout']), default='loocv', help='Cross-validation scheme')
@click.option('--noise', type=click.FloatRange(min=0.0), default=None, help='Relative measurement noise sigma')
@click.option('--overheads/--no-overheads', default=True, help='Profile runtime overheads with the full model')
@click.pass_context
def evaluate(ctx, corpus, mode, noise, overheads):
    '''Evaluate the predictor against the oracle and HMP on CORPUS.'''
    _browser(ctx, noise).evaluate(Path(corpus), _metrics(ctx.obj['options']['metric']), mode, overheads)


@cli.command()
@click.argument('page_dir', type=click.Path(exists=True, file_okay=False))
@click.option('--model-dir', type=click.Path(exists=True, file_okay=False), default=None,
              help='Directory holding model_<metric>.json files (default: OUT/models)')
@click.option('--goal', type=click.Choice(['time', 'energy', 'edp']), default=None, help='Model to use')
@click.option('--network', type=str, default=None, help='Network class such as 3G:good, picks the goal')
@click.option('--chunk-size', type=click.IntRange(min=1), default=4096, help='Bytes parsed between snapshots')
@click.pass_context
def predict(ctx, page_dir, model_dir, goal, network, chunk_size):
    '''Predict and apply a configuration while PAGE_DIR loads.'''
    _browser(ctx).predict(Path(page_dir), model_dir, goal, network, chunk_size)


@cli.command()
@click.argument('corpus', type=click.Path(exists=True, file_okay=False))
@click.pass_context
def sweep(ctx, corpus):
    '''Cost of every configuration on every page of CORPUS.'''
    _browser(ctx).sweep(Path(corpus), _metrics(ctx.obj['options']['metric']))


@cli.command()
@click.argument('report_json', type=click.Path(exists=True, dir_okay=False))
@click.option('--corpus', type=click.Path(exists=True, file_okay=False), default=None,
              help='Corpus the report was made from, for the diversity summary')
@click.option('--clean', is_flag=True, help='Remove all generated output folders instead')
@click.pass_context
def report(ctx, report_json, corpus, clean):
    '''Summarise REPORT_JSON and write plot data.'''
    if clean:
        cleanup(ctx.obj['options']['out'])
        logger.info('All output files removed')
        return
    _browser(ctx).report(Path(report_json), Path(corpus) if corpus else None)


@cli.command()
@click.argument('page_a', type=click.Path(exists=True, file_okay=False))
@click.argument('page_b', type=click.Path(exists=True, file_okay=False))
@click.pass_context
def transfer(ctx, page_a, page_b):
    '''How much PAGE_B loses under the best configuration of PAGE_A.'''
    _browser(ctx).transfer(Path(page_a), Path(page_b))


def main():
    cli(obj={})


if __name__ == '__main__':
    main()
