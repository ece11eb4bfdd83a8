from setuptools import find_packages, setup

with open('README.md') as f:
    readme = f.read()

with open('LICENSE.txt') as f:
    license = f.read()

setup(
    name='momentkit',
    version='0.1.0',
    description='Time-grounded video instruction data and temporal tokens',
    long_description=readme,
    long_description_content_type="text/markdown",
    classifiers=[
        'Programming Language :: Python :: 3.9',
        'License :: OSI Approved :: MIT License',

        # Video understanding
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'Topic :: Multimedia :: Video',

        'Operating System :: OS Independent',
    ],
    python_requires='>=3.9',  # importlib.resources.files, BooleanOptionalAction
    keywords='video grounding temporal tokens instruction data',
    license=license,
    packages=find_packages(exclude=('tests', 'docs', 'examples')),
    package_data={
        'momentkit.instructions': ['templates/*.txt'],
    },
    install_requires=[
        'numpy>=1.17',  # np.random.Generator
        'scipy>=1.10',  # gaussian_filter1d(radius=...)
        'joblib',
        'tabulate',
        'pydantic>=2',
    ],
    tests_require=[
        'pytest',
        'pytest-cov',
        'pytest-env',
        'hypothesis',
    ],
    entry_points={
        'console_scripts': ['momentkit=momentkit.pipeline.cli:main'],
    },
)
