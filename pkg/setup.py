from setuptools import setup, find_packages
import pathlib

here = pathlib.Path(__file__).parent.resolve()

# Get the long description from the README file
long_description = (here / 'README.md').read_text(encoding='utf-8')

setup(
    name='tspq',
    version='0.1',
    description='Quantum, hybrid and classical solvers for small fixed-endpoint TSP instances',
    long_description=long_description,
    long_description_content_type='text/markdown',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: BSD License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3 :: Only',
        'Topic :: Scientific/Engineering :: Physics',
    ],
    keywords='TSP, QAOA, QUBO, MPI',
    packages=find_packages(where='.', exclude=['tests']),
    python_requires='>=3.8',
    install_requires=['numpy', 'scipy'],
    extras_require={
        'jit': ['numba'],
        'mpi': ['mpi4py'],
        'test': ['pytest', 'mockmpi'],
    },
    entry_points={
        'console_scripts': ['tspq=tspq.cli:main'],
    },
)
