"""Configuration-driven experiment runner"""
