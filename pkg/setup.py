from setuptools import setup, find_packages

setup(
    name="sparsepose",
    version="1.0.0",
    packages=find_packages(exclude=['tests', 'tests.*']),
    include_package_data=True,
    install_requires=[
        'numpy>=1.26.0',
        'scipy>=1.11.0',
        'pandas>=2.1.0',
        'Pillow>=10.0.0',
        'click>=8.1.7',
        'python-dotenv>=1.0.0',
    ],
    extras_require={
        'test': ['pytest>=7.4.0'],
    },
    entry_points={
        'console_scripts': [
            'sparsepose=sparsepose.cli:cli',
        ],
    },
    python_requires='>=3.10',
)
