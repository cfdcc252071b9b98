from setuptools import setup


setup(
    name='neqrenorm',
    version="0.1.0",
    author='The neqrenorm Developers',
    package_dir={'': 'src/python'},
    packages=['neqrenorm'],
    description='Tree expansion, Friedrichs diagrams and renormalized '
                'counterterms for nonequilibrium Bose gases with a quartic '
                'interaction.',
    license='Apache-2.0',
    python_requires='>=3.8',
    install_requires=[
        'numpy',
        'scipy',
        'networkx',
    ],
    extras_require={
        'test': ['hypothesis'],
    },
    entry_points={
        'console_scripts': ['neqrenorm=neqrenorm.cli:main'],
    },
)
