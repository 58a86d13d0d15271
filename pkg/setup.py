from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name='glm_subsampling',
    version='0.1.0',
    description='Optimal subsampling for generalized linear models when responses are expensive to measure',
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=['tests', 'tests.*']),
    install_requires=[
        'pydantic>=2.0.0',
        'numpy>=1.24.0',
        'scipy>=1.10.0',
        'pandas>=2.0.0',
        'scikit-learn>=1.2.0',
        'python-dotenv>=1.0.0',
        'tenacity>=8.2.0'
    ],
    extras_require={
        'dev': [
            'pytest>=7.0.0',
            'black>=23.0.0',
            'isort>=5.12.0',
            'mypy>=1.0.0'
        ]
    },
    entry_points={
        'console_scripts': [
            'glm-subsample=glm_subsampling.cli.main:main',
        ],
    },
    classifiers=[
        'Development Status :: 4 - Beta',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Topic :: Scientific/Engineering :: Mathematics',
        'Operating System :: OS Independent'
    ],
    python_requires='>=3.8',
    keywords='subsampling, generalized linear models, optimal design, measurement constraints, statistics',
)
