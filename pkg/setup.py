from setuptools import setup

setup(
    name='xferbo',
    version='0.1-alpha',
    packages=['xferbo', 'xferbo.data', 'xferbo.metrics', 'xferbo.surrogates', 'xferbo.transforms', 'xferbo.optim',
              'xferbo.benchmarks', 'xferbo.configuratron'],
    install_requires=[
        'numpy>=1.17.4',
        'scipy>=1.8',
        'scikit-learn>=1.0',
        'pandas>=1.0.0',
        'tqdm>=4.46.0',
        'pyyaml>=5.3.1',
        'pyyaml-include>=1.2,<2',
        'parse>=1.15',
    ],
    entry_points={
        'console_scripts': ['xferbo=xferbo.__main__:main'],
    },
    license='BSD',
    description='Constrained Bayesian optimization with transfer learning through ensembles of Gaussian processes'
)
